//! Market smile file ingestion: a commented CSV of quotes grouped by
//! maturity, with the spot and valuation metadata carried in leading
//! `#` comment lines.
//!
//! Format:
//!
//! ```text
//! # source: <free text>
//! # valuation_date: <YYYY-MM-DD>
//! # s0: <spot>
//! tau_yr,r_per_yr,log_moneyness,implied_vol
//! 0.0795,0.0425,0.0626,0.3354
//! ...
//! ```
//!
//! Rows are ordered by maturity, and within one maturity by descending
//! log-moneyness; the loader validates both orderings rather than fixing
//! them up, so a scrambled file is rejected loudly.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::calibration::MarketQuote;
use crate::error::{Error, Result};

/// One maturity's quotes sharing a single rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuoteBlock {
    pub tau: f64,
    pub r: f64,
    pub quotes: Vec<MarketQuote>,
}

/// A full smile surface snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketDataset {
    pub s0: f64,
    pub quote_blocks: Vec<QuoteBlock>,
    pub source: String,
    pub valuation_date: String,
}

impl MarketDataset {
    pub fn n_quotes(&self) -> usize {
        self.quote_blocks.iter().map(|b| b.quotes.len()).sum()
    }

    /// Canonical CSV serialization: floats print in shortest round-trip
    /// form, so equal datasets serialize to equal bytes.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# source: {}\n", self.source));
        out.push_str(&format!("# valuation_date: {}\n", self.valuation_date));
        out.push_str(&format!("# s0: {}\n", self.s0));
        out.push_str(&EXPECTED_HEADER.join(","));
        out.push('\n');
        for block in &self.quote_blocks {
            for q in &block.quotes {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    q.tau, q.r, q.log_moneyness, q.implied_vol
                ));
            }
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        if !(self.s0 > 0.0) {
            return Err(Error::InvalidParameter {
                name: "s0",
                value: self.s0,
                requirement: "must be > 0",
            });
        }
        if self.quote_blocks.is_empty() {
            return Err(Error::SchemaMismatch { message: "dataset holds no maturity blocks".into() });
        }
        let mut prev_tau = 0.0;
        for block in &self.quote_blocks {
            if block.quotes.is_empty() {
                return Err(Error::EmptyBlock { tau: block.tau });
            }
            if block.tau <= prev_tau {
                return Err(Error::SchemaMismatch {
                    message: format!("maturity blocks not strictly increasing at tau = {}", block.tau),
                });
            }
            prev_tau = block.tau;
            for q in &block.quotes {
                q.check().map_err(|e| Error::SchemaMismatch {
                    message: format!("invalid quote in tau = {} block: {e}", block.tau),
                })?;
                if (q.tau - block.tau).abs() > 1e-12 || (q.r - block.r).abs() > 1e-12 {
                    return Err(Error::SchemaMismatch {
                        message: format!(
                            "quote (tau = {}, r = {}) disagrees with its block (tau = {}, r = {})",
                            q.tau, q.r, block.tau, block.r
                        ),
                    });
                }
            }
            for w in block.quotes.windows(2) {
                if w[1].log_moneyness > w[0].log_moneyness {
                    return Err(Error::SchemaMismatch {
                        message: format!(
                            "quotes in tau = {} block not sorted by descending log-moneyness",
                            block.tau
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

const EXPECTED_HEADER: [&str; 4] = ["tau_yr", "r_per_yr", "log_moneyness", "implied_vol"];

/// Parse a smile CSV from memory. `load_market_csv` wraps this with file
/// IO; the bundled reference dataset uses it directly.
pub fn parse_market_csv(content: &str) -> Result<MarketDataset> {
    let mut s0: Option<f64> = None;
    let mut source = String::from("unknown");
    let mut valuation_date = String::from("unknown");
    for line in content.lines() {
        let trimmed = line.trim();
        if !trimmed.starts_with('#') {
            break;
        }
        if let Some((key, value)) = trimmed.trim_start_matches('#').split_once(':') {
            let value = value.trim();
            match key.trim() {
                "s0" => {
                    s0 = Some(value.parse::<f64>().map_err(|_| Error::SchemaMismatch {
                        message: format!("s0 metadata is not a number: '{value}'"),
                    })?)
                }
                "source" => source = value.to_string(),
                "valuation_date" => valuation_date = value.to_string(),
                _ => {}
            }
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(content.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| Error::SchemaMismatch { message: format!("cannot read header: {e}") })?
        .clone();
    if headers.len() != 4 || headers.iter().zip(EXPECTED_HEADER).any(|(a, b)| a != b) {
        return Err(Error::SchemaMismatch {
            message: format!(
                "expected header '{}', got '{}'",
                EXPECTED_HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }

    let mut quotes: Vec<(u64, MarketQuote)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::ParseError { line: line as usize, message: e.to_string() }
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0) as usize;
        let field = |idx: usize| -> Result<f64> {
            let raw = record.get(idx).ok_or(Error::ParseError {
                line,
                message: format!("missing column {}", EXPECTED_HEADER[idx]),
            })?;
            raw.parse::<f64>().map_err(|_| Error::ParseError {
                line,
                message: format!("column {} is not a number: '{raw}'", EXPECTED_HEADER[idx]),
            })
        };
        let q = MarketQuote {
            tau: field(0)?,
            r: field(1)?,
            log_moneyness: field(2)?,
            implied_vol: field(3)?,
        };
        if !(q.tau > 0.0) {
            return Err(Error::ParseError {
                line,
                message: format!("tau_yr must be > 0, got {}", q.tau),
            });
        }
        if !(q.implied_vol > 0.0) {
            return Err(Error::ParseError {
                line,
                message: format!("implied_vol must be > 0, got {}", q.implied_vol),
            });
        }
        quotes.push((line as u64, q));
    }

    if quotes.is_empty() {
        return Err(Error::SchemaMismatch { message: "no quote rows found".into() });
    }
    let s0 = s0.ok_or(Error::SchemaMismatch {
        message: "missing '# s0: <spot>' metadata line".into(),
    })?;

    // group contiguous runs of equal tau; ordering problems surface in check()
    let mut quote_blocks: Vec<QuoteBlock> = Vec::new();
    for (_, q) in quotes {
        match quote_blocks.last_mut() {
            Some(block) if (block.tau - q.tau).abs() <= 1e-12 => block.quotes.push(q),
            _ => quote_blocks.push(QuoteBlock { tau: q.tau, r: q.r, quotes: vec![q] }),
        }
    }

    let dataset = MarketDataset { s0, quote_blocks, source, valuation_date };
    dataset.check()?;
    Ok(dataset)
}

/// Load and validate a smile CSV from disk.
pub fn load_market_csv(path: &Path) -> Result<MarketDataset> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_market_csv(&content)
}

/// Write a dataset back out in the same format; floats print in shortest
/// round-trip form, so save followed by load reproduces the dataset
/// exactly.
pub fn save_market_csv(path: &Path, dataset: &MarketDataset) -> Result<()> {
    dataset.check()?;
    std::fs::write(path, dataset.to_csv_string()).map_err(|e| Error::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

/// The reference smile surface: Intesa San Paolo, 2007-11-22, S0 = 5.16,
/// six maturities, embedded in the binary so every consumer sees the same
/// bytes.
pub fn bundled_market_csv() -> &'static str {
    include_str!("../data/intesa_2007-11-22.csv")
}

/// Parsed form of the bundled reference dataset.
pub fn bundled_dataset() -> Result<MarketDataset> {
    parse_market_csv(bundled_market_csv())
}
