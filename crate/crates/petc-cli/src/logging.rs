//! Tiny stderr logger driven by the PETC_LOG environment variable
//! (error | info | debug; default error).

use std::sync::OnceLock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Level {
    Error = 0,
    Info = 1,
    Debug = 2,
}

fn level() -> Level {
    static LEVEL: OnceLock<Level> = OnceLock::new();
    *LEVEL.get_or_init(|| match std::env::var("PETC_LOG").as_deref() {
        Ok("debug") => Level::Debug,
        Ok("info") => Level::Info,
        _ => Level::Error,
    })
}

pub fn error(msg: &str) {
    eprintln!("error: {msg}");
}

pub fn info(msg: &str) {
    if level() >= Level::Info {
        eprintln!("info: {msg}");
    }
}

pub fn debug(msg: &str) {
    if level() >= Level::Debug {
        eprintln!("debug: {msg}");
    }
}
