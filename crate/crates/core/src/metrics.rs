//! Crawl evaluation metrics.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("ratio undefined: no pages were retrieved")]
    DivisionDomain,
    #[error("valid pages ({valid}) exceed total pages ({total})")]
    ValidExceedsTotal { valid: u64, total: u64 },
}

/// Share of retrieved pages that were valid.
pub fn valid_page_ratio(valid: u64, total: u64) -> Result<f64, MetricError> {
    if total == 0 {
        return Err(MetricError::DivisionDomain);
    }
    if valid > total {
        return Err(MetricError::ValidExceedsTotal { valid, total });
    }
    Ok(valid as f64 / total as f64)
}
