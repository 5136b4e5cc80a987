use super::CeqlError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Str(String),
    Int(i64),
    Float(f64),
    Semi,
    Plus,
    Star,
    Comma,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Eof,
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, CeqlError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0usize, 1usize, 1usize);

    let err = |line, col, message: String| CeqlError::Syntax { line, col, message };

    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            {
                i += 1;
                col += 1;
            }
            continue;
        }
        // line comment
        if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let next = chars.get(i + 1).copied();
        let simple = match c {
            ';' => Some((Tok::Semi, 1)),
            '+' => Some((Tok::Plus, 1)),
            '*' => Some((Tok::Star, 1)),
            ',' => Some((Tok::Comma, 1)),
            '(' => Some((Tok::LParen, 1)),
            ')' => Some((Tok::RParen, 1)),
            '[' => Some((Tok::LBracket, 1)),
            ']' => Some((Tok::RBracket, 1)),
            '=' if next == Some('=') => Some((Tok::Eq, 2)),
            '=' => Some((Tok::Eq, 1)),
            '!' if next == Some('=') => Some((Tok::Ne, 2)),
            '<' if next == Some('>') => Some((Tok::Ne, 2)),
            '<' if next == Some('=') => Some((Tok::Le, 2)),
            '<' => Some((Tok::Lt, 1)),
            '>' if next == Some('=') => Some((Tok::Ge, 2)),
            '>' => Some((Tok::Gt, 1)),
            _ => None,
        };
        if let Some((tok, n)) = simple {
            {
                i += n;
                col += n;
            }
            out.push(Token { tok, line: tl, col: tc });
            continue;
        }
        if c == '"' || c == '\'' {
            let quote = c;
            let mut s = String::new();
            {
                i += 1;
                col += 1;
            }
            loop {
                match chars.get(i) {
                    None | Some('\n') => return Err(err(tl, tc, "unterminated string literal".into())),
                    Some(&ch) if ch == quote => {
                        {
                            i += 1;
                            col += 1;
                        }
                        break;
                    }
                    Some('\\') => {
                        let esc = chars.get(i + 1).copied();
                        match esc {
                            Some(e @ ('\\' | '"' | '\'')) => s.push(e),
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            _ => return Err(err(line, col, "invalid escape sequence".into())),
                        }
                        {
                            i += 2;
                            col += 2;
                        }
                    }
                    Some(&ch) => {
                        s.push(ch);
                        {
                            i += 1;
                            col += 1;
                        }
                    }
                }
            }
            out.push(Token {
                tok: Tok::Str(s),
                line: tl,
                col: tc,
            });
            continue;
        }
        let negative_number = c == '-' && next.is_some_and(|d| d.is_ascii_digit());
        if c.is_ascii_digit() || negative_number {
            let start = i;
            let mut j = i + 1;
            let mut is_float = false;
            while j < chars.len() {
                let d = chars[j];
                if d.is_ascii_digit() {
                    j += 1;
                } else if d == '.' && !is_float && chars.get(j + 1).is_some_and(|x| x.is_ascii_digit()) {
                    is_float = true;
                    j += 1;
                } else if (d == 'e' || d == 'E')
                    && (chars.get(j + 1).is_some_and(|x| x.is_ascii_digit())
                        || (matches!(chars.get(j + 1), Some('-' | '+'))
                            && chars.get(j + 2).is_some_and(|x| x.is_ascii_digit())))
                {
                    is_float = true;
                    j += 2;
                } else {
                    break;
                }
            }
            let text: String = chars[start..j].iter().collect();
            let tok = if is_float {
                Tok::Float(
                    text.parse()
                        .map_err(|_| err(tl, tc, format!("invalid number `{text}`")))?,
                )
            } else {
                Tok::Int(
                    text.parse()
                        .map_err(|_| err(tl, tc, format!("integer out of range `{text}`")))?,
                )
            };
            {
                i += j - start;
                col += j - start;
            }
            out.push(Token { tok, line: tl, col: tc });
            continue;
        }
        if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            let text: String = chars[start..j].iter().collect();
            {
                i += j - start;
                col += j - start;
            }
            out.push(Token {
                tok: Tok::Ident(text),
                line: tl,
                col: tc,
            });
            continue;
        }
        return Err(err(tl, tc, format!("unexpected character `{c}`")));
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        col,
    });
    Ok(out)
}
