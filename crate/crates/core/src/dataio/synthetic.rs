use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::{Modality, WindowSet};
use crate::error::{Error, Result};
use crate::numerics::Tensor2;
use crate::rng::{rng_from, Rng};

/// Parameters of the synthetic multimodal generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub clients: usize,
    pub classes: usize,
    /// Windows held by each client, spread over classes by
    /// [`class_counts`].
    pub windows_per_client: usize,
    /// `(modality, feature width, class separation)` per stream.
    pub modalities: Vec<(Modality, usize, f64)>,
    pub noise: f64,
    /// Concentration of the per-client label proportions.
    pub dirichlet_alpha: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            clients: 5,
            classes: 7,
            windows_per_client: 140,
            modalities: Modality::ALL
                .iter()
                .map(|&m| (m, m.feature_dim(), 3.0))
                .collect(),
            noise: 1.0,
            dirichlet_alpha: 0.5,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.clients == 0 || self.classes == 0 || self.windows_per_client == 0 {
            return Err(Error::param(
                "synthetic clients, classes and windows must be positive",
            ));
        }
        if self.modalities.is_empty() {
            return Err(Error::param("synthetic spec needs at least one modality"));
        }
        for &(m, dim, sep) in &self.modalities {
            if dim == 0 || !(sep > 0.0) {
                return Err(Error::param(format!(
                    "modality {m}: width must be positive and separation > 0"
                )));
            }
        }
        if !(self.noise >= 0.0) || !(self.dirichlet_alpha > 0.0) {
            return Err(Error::param(
                "noise must be >= 0 and dirichlet concentration > 0",
            ));
        }
        Ok(())
    }

    fn total_per_client(&self) -> usize {
        self.windows_per_client
    }
}

fn gamma(shape: f64, rng: &mut Rng) -> f64 {
    Gamma::new(shape, 1.0).expect("positive shape").sample(rng)
}

/// Splits `total` windows over `classes` labels: every class receives at
/// least `min(2, total / classes)` windows and the remainder follows
/// Dirichlet(`alpha`) proportions, rounded by largest remainder.
pub fn class_counts(total: usize, classes: usize, alpha: f64, rng: &mut Rng) -> Vec<usize> {
    if classes == 0 {
        return Vec::new();
    }
    let floor = (total / classes).min(2);
    let rest = total - floor * classes;
    let draws: Vec<f64> = (0..classes).map(|_| gamma(alpha, rng)).collect();
    let sum: f64 = draws.iter().sum();
    let shares: Vec<f64> = if sum > 0.0 {
        draws.iter().map(|g| g / sum * rest as f64).collect()
    } else {
        vec![rest as f64 / classes as f64; classes]
    };
    let mut counts: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let mut order: Vec<usize> = (0..classes).collect();
    order.sort_by(|&a, &b| {
        let (fa, fb) = (shares[a] - shares[a].floor(), shares[b] - shares[b].floor());
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    let assigned: usize = counts.iter().sum();
    for &c in order.iter().take(rest - assigned) {
        counts[c] += 1;
    }
    counts.iter().map(|c| c + floor).collect()
}

fn gaussian_vec(n: usize, scale: f64, rng: &mut Rng) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            scale * z
        })
        .collect()
}

/// Class means per modality, shared by every client.
fn class_means(spec: &SyntheticSpec) -> Vec<Vec<Vec<f64>>> {
    let mut rng = rng_from(spec.seed, &[0x5e, 0]);
    spec.modalities
        .iter()
        .map(|&(_, dim, sep)| {
            (0..spec.classes)
                .map(|_| gaussian_vec(dim, sep / (dim as f64).sqrt(), &mut rng))
                .collect()
        })
        .collect()
}

/// Draws one window set per client. Each (client, class) pair forms one
/// recording whose windows are contiguous.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<WindowSet>> {
    spec.validate()?;
    let means = class_means(spec);
    let mut out = Vec::with_capacity(spec.clients);
    for c in 0..spec.clients {
        let mut rng = rng_from(spec.seed, &[0x5e, 1, c as u64]);
        let counts = class_counts(
            spec.total_per_client(),
            spec.classes,
            spec.dirichlet_alpha,
            &mut rng,
        );
        let n: usize = counts.iter().sum();
        let mut features: Vec<Tensor2> = spec
            .modalities
            .iter()
            .map(|&(_, d, _)| Tensor2::zeros(n, d))
            .collect();
        let (mut labels, mut recording, mut window_index) = (Vec::new(), Vec::new(), Vec::new());
        let mut row = 0;
        let mut rec = 0;
        for (class, &count) in counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            for w in 0..count {
                for (m, f) in features.iter_mut().enumerate() {
                    let mean = &means[m][class];
                    for (o, mu) in f.row_mut(row).iter_mut().zip(mean) {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        *o = mu + spec.noise * z;
                    }
                }
                labels.push(class);
                recording.push(rec);
                window_index.push(w);
                row += 1;
            }
            rec += 1;
        }
        out.push(WindowSet {
            client: format!("client{c:02}"),
            modalities: spec.modalities.iter().map(|&(m, _, _)| m).collect(),
            features,
            labels,
            recording,
            window_index,
        });
    }
    Ok(out)
}

const EPOCH_START_US: i64 = 1_500_000_000_000_000;

/// Writes raw recordings in the MEx directory layout: one recording per
/// (client, class) and modality, long enough for that pair's window count
/// under `window_secs`/`stride_secs`. Accelerometers carry class-specific
/// sinusoids, image modalities a class-specific frame, both plus noise.
/// Only the modality identities of `spec.modalities` are used.
pub fn write_synthetic_mex(
    spec: &SyntheticSpec,
    root: &Path,
    window_secs: f64,
    stride_secs: f64,
) -> Result<()> {
    spec.validate()?;
    if !(window_secs >= stride_secs && stride_secs > 0.0) {
        return Err(Error::param(
            "window must be at least the stride and the stride positive",
        ));
    }
    let mut proto = rng_from(spec.seed, &[0x3e, 0]);
    // per class: accel frequencies/phases and image prototypes
    let freqs: Vec<[f64; 3]> = (0..spec.classes)
        .map(|_| [0; 3].map(|_| proto.random_range(0.3..3.0)))
        .collect();
    let images: Vec<Vec<Vec<f64>>> = spec
        .modalities
        .iter()
        .map(|&(m, _, sep)| {
            (0..spec.classes)
                .map(|_| {
                    if m.is_accelerometer() {
                        Vec::new()
                    } else {
                        gaussian_vec(m.frame_width(), sep, &mut proto)
                    }
                })
                .collect()
        })
        .collect();
    for c in 0..spec.clients {
        let mut rng = rng_from(spec.seed, &[0x3e, 1, c as u64]);
        let counts = class_counts(
            spec.total_per_client(),
            spec.classes,
            spec.dirichlet_alpha,
            &mut rng,
        );
        for (class, &count) in counts.iter().enumerate() {
            if count == 0 {
                continue;
            }
            let duration = window_secs + (count - 1) as f64 * stride_secs;
            let t0 = EPOCH_START_US + (c * spec.classes + class) as i64 * 3_600_000_000;
            for (mi, &(m, _, sep)) in spec.modalities.iter().enumerate() {
                let rate = m.target_rate();
                let frames = (duration * rate).floor() as usize + 1;
                let mut text = String::new();
                for i in 0..frames {
                    let t = i as f64 / rate;
                    write!(text, "{}", t0 + (t * 1e6).round() as i64).expect("string write");
                    if m.is_accelerometer() {
                        for (axis, f) in freqs[class].iter().enumerate() {
                            let phase = axis as f64 + if m == Modality::Acw { 0.5 } else { 0.0 };
                            let z: f64 = StandardNormal.sample(&mut rng);
                            let v = sep * (std::f64::consts::TAU * f * t + phase).sin()
                                + spec.noise * z;
                            write!(text, ",{v}").expect("string write");
                        }
                    } else {
                        for mu in &images[mi][class] {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            write!(text, ",{}", mu + spec.noise * z).expect("string write");
                        }
                    }
                    text.push('\n');
                }
                let dir = root.join(m.name()).join(format!("{:02}", c + 1));
                fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                let file = dir.join(format!("{:02}_1.csv", class + 1));
                fs::write(&file, text).map_err(|e| Error::io(&file, e))?;
            }
        }
    }
    Ok(())
}
