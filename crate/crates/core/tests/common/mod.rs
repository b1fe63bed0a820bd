//! Shared helpers for the integration suites: an independent quadrature
//! oracle for the chi-squared upper tail, scripted fixtures, and config
//! plumbing. The oracle deliberately shares no code with the library's
//! gamma-function path.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use styletv::config::RunConfig;
use styletv::modelio::{
    AttributeScript, CellSelector, ConceptScript, ExtractorScript, IdentifyScript, MockFixture,
};
use styletv::stimulus::{Placement, StyleFamily};

/// ln Gamma(df/2) in closed form: df/2 is an integer or half-integer, so the
/// value is an exact factorial / double-factorial sum, independent of any
/// series approximation.
pub fn ln_gamma_half(df: u32) -> f64 {
    assert!(df >= 1);
    if df.is_multiple_of(2) {
        // Gamma(m) = (m-1)!
        let m = df / 2;
        (2..m).map(|k| (k as f64).ln()).sum()
    } else {
        // Gamma(m + 1/2) = sqrt(pi) * prod_{j=1..m} (j - 1/2)
        let m = (df - 1) / 2;
        0.5 * std::f64::consts::PI.ln() + (1..=m).map(|j| (j as f64 - 0.5).ln()).sum::<f64>()
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1], computed by Newton iteration
/// on the Legendre recurrence.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            // Evaluate P_n(x) and P'_n(x).
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = pk;
            }
            let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let mut p0 = 1.0;
        let mut p1 = x;
        for k in 2..=n {
            let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
            p0 = p1;
            p1 = pk;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn gl40() -> &'static (Vec<f64>, Vec<f64>) {
    static GL: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    GL.get_or_init(|| gauss_legendre(40))
}

/// Quadrature oracle for P(chi2(df) > x): composite Gauss-Legendre
/// integration of the density over the upper tail.
pub fn chi2_upper_tail_oracle(x: f64, df: u32) -> f64 {
    assert!(x > 0.0, "oracle integrates strictly positive statistics");
    let a = df as f64 / 2.0;
    let ln_norm = a * std::f64::consts::LN_2 + ln_gamma_half(df);
    let ln_density = move |t: f64| (a - 1.0) * t.ln() - t / 2.0 - ln_norm;

    // Find a cutoff where the density has underflowed far below the target
    // accuracy; beyond it the remaining mass is < ~1e-19.
    let mut hi = x.max(df as f64) + 20.0;
    while ln_density(hi) > -46.0 {
        hi += 20.0;
    }

    let (nodes, weights) = gl40();
    let panels = 64usize;
    let h = (hi - x) / panels as f64;
    let mut sum = 0.0;
    for i in 0..panels {
        let lo = x + i as f64 * h;
        let mid = lo + h / 2.0;
        let half = h / 2.0;
        for (node, weight) in nodes.iter().zip(weights) {
            let t = mid + half * node;
            sum += weight * half * ln_density(t).exp();
        }
    }
    sum.clamp(0.0, 1.0)
}

pub fn fixture_path(dir: &Path, fixture: &MockFixture) -> PathBuf {
    let path = dir.join("fixture.json");
    std::fs::write(&path, serde_json::to_string_pretty(fixture).unwrap()).unwrap();
    path
}

pub fn config_path(dir: &Path, config: &RunConfig) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

/// All-correct identification; decorative attribute lists replace "small"
/// (a top-3 term) with "calm", mirroring a physical-for-temperamental swap.
pub fn shift_fixture() -> MockFixture {
    MockFixture {
        default: Some(ConceptScript {
            identify: Some(IdentifyScript::default()),
            attributes: Some(AttributeScript {
                functional: Some("loyal, playful, small".into()),
                decorative: Some("loyal, playful, calm".into()),
                ..AttributeScript::default()
            }),
        }),
        concepts: Default::default(),
        extractor: Some(ExtractorScript::Echo),
    }
}

/// Style-agnostic script: identical attribute lists for both styles.
pub fn null_fixture() -> MockFixture {
    MockFixture::uniform("loyal, playful, small")
}

/// All-correct except: the named concept is misidentified on one whole
/// decorative size-position combo (8 stimuli, one per font), dropping its
/// decorative survivors to 32 < 36.
pub fn gating_fixture(concept_id: &str) -> MockFixture {
    let mut fixture = null_fixture();
    fixture.concepts.insert(
        concept_id.to_string(),
        ConceptScript {
            identify: Some(IdentifyScript {
                reply: None,
                wrong_cells: vec![CellSelector {
                    style: Some(StyleFamily::Decorative),
                    placement: Some(Placement::BottomCenter),
                    size: Some(35),
                    font: None,
                }],
                wrong_reply: Some("Sphynx".into()),
            }),
            attributes: Some(AttributeScript {
                fixed: Some("loyal, playful, small".into()),
                ..AttributeScript::default()
            }),
        },
    );
    fixture
}

pub fn read_bytes(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}
