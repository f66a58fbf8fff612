//! Transaction latency under attack: `t_l = RTT (1 + q)(1 + p)` with
//! `p = n / m`, and commit time `t_c = t_r + t_l`. Times are milliseconds.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ModelError {
    #[error("total node count m must be at least 1")]
    NoNodes,
    #[error("byzantine count n = {n} exceeds total m = {m}")]
    TooManyByzantine { n: u64, m: u64 },
    #[error("attack success rate q = {0} is outside [0, 1]")]
    BadRate(f64),
    #[error("{0} must be finite and non-negative")]
    BadTime(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyModelParams {
    pub rtt: f64,
    /// Byzantine nodes.
    pub n: u64,
    /// Total nodes.
    pub m: u64,
    /// Attack success rate.
    pub q: f64,
    /// Transaction request time.
    pub t_r: f64,
}

impl LatencyModelParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.m == 0 {
            return Err(ModelError::NoNodes);
        }
        if self.n > self.m {
            return Err(ModelError::TooManyByzantine { n: self.n, m: self.m });
        }
        if !(0.0..=1.0).contains(&self.q) {
            return Err(ModelError::BadRate(self.q));
        }
        if !(self.rtt.is_finite() && self.rtt >= 0.0) {
            return Err(ModelError::BadTime("rtt"));
        }
        if !(self.t_r.is_finite() && self.t_r >= 0.0) {
            return Err(ModelError::BadTime("t_r"));
        }
        Ok(())
    }

    /// Share of byzantine nodes, `n / m`.
    pub fn p(&self) -> Result<f64, ModelError> {
        self.validate()?;
        Ok(self.n as f64 / self.m as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatencyModelResult {
    pub t_l: f64,
    pub t_c: f64,
}

pub fn transaction_latency(params: &LatencyModelParams) -> Result<f64, ModelError> {
    let p = params.p()?;
    Ok(params.rtt * (1.0 + params.q) * (1.0 + p))
}

pub fn commit_time(params: &LatencyModelParams) -> Result<f64, ModelError> {
    Ok(params.t_r + transaction_latency(params)?)
}

pub fn evaluate(params: &LatencyModelParams) -> Result<LatencyModelResult, ModelError> {
    let t_l = transaction_latency(params)?;
    Ok(LatencyModelResult {
        t_l,
        t_c: params.t_r + t_l,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(rtt: f64, n: u64, m: u64, q: f64, t_r: f64) -> LatencyModelParams {
        LatencyModelParams { rtt, n, m, q, t_r }
    }

    #[test]
    fn worked_examples() {
        assert_eq!(transaction_latency(&params(100.0, 0, 4, 0.0, 0.0)).unwrap(), 100.0);
        assert_eq!(transaction_latency(&params(100.0, 1, 4, 0.5, 0.0)).unwrap(), 187.5);
        assert_eq!(commit_time(&params(100.0, 1, 4, 0.5, 50.0)).unwrap(), 237.5);
        let r = evaluate(&params(100.0, 1, 4, 0.5, 0.0)).unwrap();
        assert_eq!(r.t_c, r.t_l);
    }

    #[test]
    fn domain_errors() {
        assert_eq!(transaction_latency(&params(1.0, 0, 0, 0.0, 0.0)), Err(ModelError::NoNodes));
        assert!(matches!(
            transaction_latency(&params(1.0, 5, 4, 0.0, 0.0)),
            Err(ModelError::TooManyByzantine { .. })
        ));
        assert!(matches!(
            transaction_latency(&params(1.0, 0, 4, 1.5, 0.0)),
            Err(ModelError::BadRate(_))
        ));
        assert!(transaction_latency(&params(-1.0, 0, 4, 0.0, 0.0)).is_err());
    }

    #[test]
    fn sweep_over_n_is_increasing() {
        let m = 7;
        let values: Vec<f64> = (0..=m)
            .map(|n| transaction_latency(&params(80.0, n, m, 0.25, 0.0)).unwrap())
            .collect();
        assert!(values.windows(2).all(|w| w[1] > w[0]));
        assert!(values.iter().all(|t| *t >= 80.0));
    }
}
