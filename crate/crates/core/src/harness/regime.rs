use std::fmt;

use serde::Serialize;

use crate::tensor::Shape;

/// Regions of the (n, snr) plane, ordered by how much the sample supports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Region {
    /// Below the statistical thresholds: inference is impossible.
    A,
    /// Statistically possible; no fast algorithm known.
    B,
    /// Order 3: the computational thresholds hold.
    C,
    /// `√d̄` times the statistical thresholds hold.
    D,
    /// Order ≥ 4: region D together with the computational thresholds. Matrices
    /// land here as soon as the statistical thresholds hold.
    E,
}

impl Region {
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Threshold {
    pub snr: f64,
    pub n: f64,
    /// Observed over required; both ≥ 1 means the threshold holds.
    pub snr_ratio: f64,
    pub n_ratio: f64,
}

impl Threshold {
    fn new(snr_req: f64, n_req: f64, snr: f64, n: f64) -> Self {
        Threshold { snr: snr_req, n: n_req, snr_ratio: snr / snr_req, n_ratio: n / n_req }
    }

    pub fn holds(&self) -> bool {
        self.snr_ratio >= 1.0 && self.n_ratio >= 1.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegimeReport {
    pub region: Region,
    pub region_index: usize,
    pub snr: f64,
    pub n: usize,
    pub shape: Vec<usize>,
    pub statistical: Threshold,
    pub computational: Threshold,
    pub sqrt_dbar_statistical: Threshold,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Places `(snr, n)` relative to the statistical and computational thresholds,
/// all with unit constants:
///
/// * statistical: `snr ≥ √(d*·d̄/n)`, `n ≥ d̄`
/// * computational: `snr ≥ √(d*^{3/2}/n)`, `n ≥ √d*`
pub fn classify_regime(snr: f64, n: usize, shape: &Shape) -> RegimeReport {
    let dstar = shape.numel() as f64;
    let dbar = shape.max_dim() as f64;
    let nf = n as f64;
    let stat = Threshold::new((dstar * dbar / nf).sqrt(), dbar, snr, nf);
    let comp = Threshold::new((dstar.powf(1.5) / nf).sqrt(), dstar.sqrt(), snr, nf);
    let strong = Threshold::new(dbar.sqrt() * stat.snr, dbar.sqrt() * stat.n, snr, nf);
    let region = if !stat.holds() {
        Region::A
    } else {
        match shape.order() {
            2 => Region::E,
            3 if strong.holds() && comp.holds() => Region::D,
            3 if comp.holds() => Region::C,
            3 => Region::B,
            _ if strong.holds() && comp.holds() => Region::E,
            _ if strong.holds() => Region::D,
            _ => Region::B,
        }
    };
    let warning = (shape.max_dim() > 2 * shape.min_dim()).then(|| {
        format!("dimensions {:?} are unbalanced; thresholds assume comparable d_j", shape.dims())
    });
    RegimeReport {
        region,
        region_index: region.index(),
        snr,
        n,
        shape: shape.dims().to_vec(),
        statistical: stat,
        computational: comp,
        sqrt_dbar_statistical: strong,
        warning,
    }
}
