//! The stock-trading example used throughout the docs and tests.

use crate::event::DataTuple;

/// Three sells of Microsoft, Intel and Amazon shares, in that order.
pub const Q1: &str = r#"SELECT * FROM Stock
WHERE SELL as msft; SELL as intel; SELL as amzn
FILTER msft[name="MSFT"] AND msft[price > 100]
   AND intel[name="INTL"]
   AND amzn[name="AMZN"] AND amzn[price < 2000]"#;

/// Schema for the stock stream.
pub const STOCK_SCHEMA: &str = "DECLARE EVENT SELL(name:string, price:int)\n\
                                DECLARE EVENT BUY(name:string, price:int)\n";

/// `(type, name, price)` rows of the example stream.
pub const STOCK_ROWS: [(&str, &str, i64); 7] = [
    ("SELL", "MSFT", 101),
    ("SELL", "MSFT", 102),
    ("SELL", "INTL", 80),
    ("BUY", "INTL", 80),
    ("SELL", "AMZN", 1900),
    ("SELL", "INTL", 81),
    ("SELL", "AMZN", 1920),
];

pub fn stock_stream() -> Vec<DataTuple> {
    STOCK_ROWS
        .iter()
        .enumerate()
        .map(|(i, (ty, name, price))| DataTuple::new(ty, i).with("name", *name).with("price", *price))
        .collect()
}

/// The example stream as CSV with a header row.
pub fn stock_csv() -> String {
    let mut s = String::from("type,name,price\n");
    for (ty, name, price) in STOCK_ROWS {
        s.push_str(&format!("{ty},{name},{price}\n"));
    }
    s
}
