//! Text state files (format `KIM1`).
//!
//! A state file stores the grid fingerprint and one potential value per
//! node, printed with 17 significant digits so binary64 values round-trip
//! exactly. Loading verifies the header against the expected background
//! field by field and re-validates mean normalization; turning the
//! potential into a metric re-validates positivity.

use crate::error::{KimError, Result};
use crate::grid::{BackgroundGeometry, Potential, Symmetry};
use crate::metric::MetricState;
use std::path::Path;
use std::sync::Arc;

pub const FORMAT_TAG: &str = "KIM1";

/// Serialize a potential with deterministic creation metadata (never
/// wall-clock data, so identical runs produce identical bytes).
pub fn render_potential(p: &Potential, created_by: &str) -> String {
    let bg = p.background();
    let mut out = String::new();
    out.push_str(FORMAT_TAG);
    out.push('\n');
    out.push_str(&format!("kind {}\n", bg.kind().as_str()));
    out.push_str(&format!("N {}\n", bg.resolution()));
    out.push_str(&format!("V {}\n", fmt17(bg.volume())));
    out.push_str(&format!("mu {}\n", fmt17(bg.mu())));
    out.push_str(&format!("symmetry {}\n", bg.symmetry().as_str()));
    out.push_str(&format!("f0sum {:016x}\n", bg.f0_digest()));
    out.push_str(&format!("created-by {created_by}\n"));
    out.push_str("phi\n");
    for v in p.values() {
        out.push_str(&fmt17(*v));
        out.push('\n');
    }
    out
}

pub fn persist_potential(p: &Potential, path: &Path, created_by: &str) -> Result<()> {
    std::fs::write(path, render_potential(p, created_by))?;
    Ok(())
}

pub fn persist_state(m: &MetricState, path: &Path, created_by: &str) -> Result<()> {
    persist_potential(m.potential(), path, created_by)
}

/// 17-significant-digit scientific form; exact for binary64 round trips.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn header_err(path: &Path, msg: impl Into<String>) -> KimError {
    KimError::BadInput(format!("{}: {}", path.display(), msg.into()))
}

/// Load a potential, verifying the header against `expected`.
pub fn load_potential(path: &Path, expected: &Arc<BackgroundGeometry>) -> Result<Potential> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let tag = lines.next().ok_or_else(|| header_err(path, "empty file"))?;
    if tag.trim() != FORMAT_TAG {
        return Err(header_err(path, format!("format tag {tag:?} is not {FORMAT_TAG}")));
    }
    let mut kind = None;
    let mut n = None;
    let mut volume = None;
    let mut mu = None;
    let mut symmetry = None;
    let mut f0sum = None;
    loop {
        let line = lines
            .next()
            .ok_or_else(|| header_err(path, "header ended before the phi section"))?;
        let line = line.trim();
        if line == "phi" {
            break;
        }
        let (key, value) = line
            .split_once(' ')
            .ok_or_else(|| header_err(path, format!("malformed header line {line:?}")))?;
        match key {
            "kind" => kind = Some(value.to_string()),
            "N" => {
                n = Some(value.parse::<usize>().map_err(|_| {
                    header_err(path, format!("cannot parse N from {value:?}"))
                })?)
            }
            "V" => {
                volume = Some(value.parse::<f64>().map_err(|_| {
                    header_err(path, format!("cannot parse V from {value:?}"))
                })?)
            }
            "mu" => {
                mu = Some(value.parse::<f64>().map_err(|_| {
                    header_err(path, format!("cannot parse mu from {value:?}"))
                })?)
            }
            "symmetry" => symmetry = Some(value.to_string()),
            "f0sum" => f0sum = Some(value.to_string()),
            "created-by" => {}
            other => {
                return Err(header_err(path, format!("unknown header key {other:?}")));
            }
        }
    }
    let kind = kind.ok_or_else(|| header_err(path, "missing kind"))?;
    if kind != expected.kind().as_str() {
        return Err(header_err(
            path,
            format!("kind {kind} does not match expected {}", expected.kind().as_str()),
        ));
    }
    let n = n.ok_or_else(|| header_err(path, "missing N"))?;
    if n != expected.resolution() {
        return Err(header_err(
            path,
            format!("resolution {n} does not match expected {}", expected.resolution()),
        ));
    }
    let volume = volume.ok_or_else(|| header_err(path, "missing V"))?;
    if volume != expected.volume() {
        return Err(header_err(
            path,
            format!("volume {volume} does not match expected {}", expected.volume()),
        ));
    }
    let mu = mu.ok_or_else(|| header_err(path, "missing mu"))?;
    if mu != expected.mu() {
        return Err(header_err(path, format!("mu {mu} does not match expected {}", expected.mu())));
    }
    let symmetry = symmetry.ok_or_else(|| header_err(path, "missing symmetry"))?;
    let expected_sym = match expected.symmetry() {
        Symmetry::None => "none",
        Symmetry::EvenInS => "even",
    };
    if symmetry != expected_sym {
        return Err(header_err(
            path,
            format!("symmetry {symmetry} does not match expected {expected_sym}"),
        ));
    }
    let f0sum = f0sum.ok_or_else(|| header_err(path, "missing f0sum"))?;
    let expected_sum = format!("{:016x}", expected.f0_digest());
    if f0sum != expected_sum {
        return Err(header_err(path, "background data fingerprint mismatch".to_string()));
    }

    let mut values = Vec::with_capacity(expected.node_count());
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        values.push(line.parse::<f64>().map_err(|_| {
            header_err(path, format!("cannot parse potential value {line:?}"))
        })?);
    }
    if values.len() != expected.node_count() {
        return Err(header_err(
            path,
            format!(
                "file holds {} values, grid has {} nodes",
                values.len(),
                expected.node_count()
            ),
        ));
    }
    // Re-validate mean normalization before the constructor re-centers.
    let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let defect = expected.integrate(&values).abs();
    if defect > 1e-9 * expected.volume() * sup.max(1.0) {
        return Err(header_err(path, format!("stored potential mean defect {defect:.3e}")));
    }
    Potential::new(expected.clone(), values)
}

/// Load and validate as a metric (positivity enforced).
pub fn load_state(path: &Path, expected: &Arc<BackgroundGeometry>) -> Result<MetricState> {
    MetricState::new(load_potential(path, expected)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{random_potential, BackgroundKind};

    fn sphere(n: usize) -> Arc<BackgroundGeometry> {
        BackgroundGeometry::build(BackgroundKind::SphereSymmetric, n, 2.0, None, Symmetry::None)
            .unwrap()
    }

    #[test]
    fn round_trip_bit_exact() {
        let bg = sphere(48);
        let p = random_potential(&bg, 5, 8, 0.37).unwrap();
        let dir = std::env::temp_dir().join("kim-statefile-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.kim");
        persist_potential(&p, &path, "kim test").unwrap();
        let q = load_potential(&path, &bg).unwrap();
        assert_eq!(p.values(), q.values());
        // Identical content when rewritten.
        let again = render_potential(&q, "kim test");
        assert_eq!(std::fs::read_to_string(&path).unwrap(), again);
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn header_mismatches_rejected() {
        let bg = sphere(48);
        let p = random_potential(&bg, 5, 8, 0.2).unwrap();
        let dir = std::env::temp_dir().join("kim-statefile-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("mismatch.kim");
        persist_potential(&p, &path, "kim test").unwrap();
        let other = sphere(64);
        assert!(matches!(
            load_potential(&path, &other),
            Err(KimError::BadInput(_))
        ));
        let wrong_vol = BackgroundGeometry::build(
            BackgroundKind::SphereSymmetric,
            48,
            4.0,
            None,
            Symmetry::None,
        )
        .unwrap();
        assert!(load_potential(&path, &wrong_vol).is_err());
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn positivity_revalidated_on_load() {
        let bg = sphere(48);
        // A potential far outside the cone persists fine as a potential but
        // refuses to load as a metric state.
        let raw = random_potential(&bg, 6, 8, 1.0).unwrap();
        let big = raw.plus_scaled(&raw, 4.0).unwrap();
        let dir = std::env::temp_dir().join("kim-statefile-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("nonpositive.kim");
        persist_potential(&big, &path, "kim test").unwrap();
        assert!(load_potential(&path, &bg).is_ok());
        assert!(matches!(
            load_state(&path, &bg),
            Err(KimError::PositivityViolation(_))
        ));
        std::fs::remove_file(&path).unwrap();
    }
}
