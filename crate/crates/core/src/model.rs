//! Scenario data model, seeded scenario generation and the scenario file format.
//!
//! A [`Scenario`] holds, for every transmitter `k`, the channel estimates
//! `ĥ_kℓ` towards every receiver `ℓ`, the uncertainty ellipsoid
//! `{A_kℓ δ : ‖δ‖ ≤ ε_kℓ}` around each estimate, the power budget `P_k` and
//! the antenna count `N_k`. Perfect CSI is encoded as `ε = 0` with `A = I`.
//!
//! # Random generation
//!
//! [`generate_scenario`] draws from a ChaCha20 stream seeded with
//! `ChaCha20Rng::seed_from_u64(seed)`. Each complex `CN(0, 1)` sample consumes
//! two `u64` words `x1, x2`, mapped to `u = ((x >> 11) + 1)·2⁻⁵³ ∈ (0, 1]`
//! and combined by Box–Muller as `√(−ln u1)·e^{j2πu2}`. Draw order is
//! transmitter-major, then receiver: first the `N_k` entries of `ĥ_kℓ`, then
//! the `N_k × N_k` shape matrix column by column, which is finally divided by
//! its largest singular value.
//!
//! # File format
//!
//! Scenarios are stored as JSON:
//!
//! ```text
//! { "K": 2, "noise_power": 1.0,
//!   "links": [ { "antennas": 3, "power_budget": 1.0,
//!                "estimates":  [ [[re, im], ...], ... ],          // one per receiver
//!                "ellipsoids": [ { "shape": [[[re, im], ...], ...], // row-major
//!                                  "radius": 0.5 }, ... ] }, ... ] }
//! ```
//!
//! Floats are written in shortest round-trip form, so `load(save(s)) == s`
//! bit for bit.

use std::path::Path;

use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::{
    is_finite_matrix, is_finite_vector, largest_singular_value, singular_value_range, CMatrix,
    CVector, C64, TOLERANCES,
};

/// Uncertainty region `{A δ : ‖δ‖ ≤ radius}` around a channel estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    shape: CMatrix,
    radius: f64,
}

impl Ellipsoid {
    /// Validates full rank, `σ_max(shape) ≤ 1` and `radius ≥ 0`.
    pub fn new(shape: CMatrix, radius: f64) -> Result<Self> {
        Self::validated(shape, radius, "ellipsoid")
    }

    fn validated(shape: CMatrix, radius: f64, field: &str) -> Result<Self> {
        if !shape.is_square() || shape.nrows() == 0 {
            return Err(Error::invariant(
                format!("{field}.shape"),
                format!("expected a non-empty square matrix, got {}x{}", shape.nrows(), shape.ncols()),
            ));
        }
        if !is_finite_matrix(&shape) {
            return Err(Error::invariant(format!("{field}.shape"), "non-finite entry"));
        }
        if !radius.is_finite() || radius < 0.0 {
            return Err(Error::invariant(
                format!("{field}.radius"),
                format!("radius must be finite and nonnegative, got {radius}"),
            ));
        }
        let (sigma_min, sigma_max) = singular_value_range(&shape)?;
        if sigma_max > 1.0 + TOLERANCES.shape_norm_slack {
            return Err(Error::invariant(
                format!("{field}.shape"),
                format!("largest singular value {sigma_max} exceeds 1"),
            ));
        }
        if !(sigma_min > TOLERANCES.rank_rel * sigma_max) {
            return Err(Error::invariant(
                format!("{field}.shape"),
                format!("shape is rank deficient (σ_min = {sigma_min:e})"),
            ));
        }
        Ok(Self { shape, radius })
    }

    /// Sphere of the given radius (`A = I`).
    pub fn spherical(n: usize, radius: f64) -> Result<Self> {
        Self::new(CMatrix::identity(n, n), radius)
    }

    pub fn shape(&self) -> &CMatrix {
        &self.shape
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.shape.nrows()
    }

    pub fn is_spherical(&self) -> bool {
        let eye = CMatrix::identity(self.dim(), self.dim());
        (&self.shape - eye).iter().all(|z| z.norm() <= 1e-12)
    }

    /// Same shape, different radius.
    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        if !radius.is_finite() || radius < 0.0 {
            return Err(Error::invariant("ellipsoid.radius", format!("got {radius}")));
        }
        Ok(Self {
            shape: self.shape.clone(),
            radius,
        })
    }

    /// Whether `shape · delta` lies in the region, i.e. `‖delta‖ ≤ radius`.
    pub fn contains_error(&self, delta: &CVector, slack: f64) -> bool {
        delta.norm() <= self.radius + slack
    }
}

/// One transmitter with its estimates and uncertainty towards every receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub estimates: Vec<CVector>,
    pub uncertainty: Vec<Ellipsoid>,
    pub power_budget: f64,
    pub antennas: usize,
}

impl Link {
    fn validate(&self, k: usize, num_links: usize) -> Result<()> {
        let field = |s: &str| format!("links[{k}].{s}");
        if self.antennas == 0 {
            return Err(Error::invariant(field("antennas"), "must be positive"));
        }
        if !(self.power_budget.is_finite() && self.power_budget > 0.0) {
            return Err(Error::invariant(
                field("power_budget"),
                format!("must be finite and positive, got {}", self.power_budget),
            ));
        }
        if self.estimates.len() != num_links {
            return Err(Error::invariant(
                field("estimates"),
                format!("expected {num_links} estimates, got {}", self.estimates.len()),
            ));
        }
        if self.uncertainty.len() != num_links {
            return Err(Error::invariant(
                field("ellipsoids"),
                format!("expected {num_links} ellipsoids, got {}", self.uncertainty.len()),
            ));
        }
        for (l, h) in self.estimates.iter().enumerate() {
            if h.len() != self.antennas {
                return Err(Error::invariant(
                    field(&format!("estimates[{l}]")),
                    format!("expected dimension {}, got {}", self.antennas, h.len()),
                ));
            }
            if !is_finite_vector(h) {
                return Err(Error::invariant(field(&format!("estimates[{l}]")), "non-finite entry"));
            }
        }
        for (l, e) in self.uncertainty.iter().enumerate() {
            if e.dim() != self.antennas {
                return Err(Error::invariant(
                    field(&format!("ellipsoids[{l}].shape")),
                    format!("expected dimension {}, got {}", self.antennas, e.dim()),
                ));
            }
        }
        Ok(())
    }
}

/// K-link MISO interference channel as seen by the transmitters.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    links: Vec<Link>,
    noise_power: f64,
}

impl Scenario {
    pub fn new(links: Vec<Link>, noise_power: f64) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::invariant("K", "at least one link is required"));
        }
        if !(noise_power.is_finite() && noise_power > 0.0) {
            return Err(Error::invariant(
                "noise_power",
                format!("must be finite and positive, got {noise_power}"),
            ));
        }
        let k = links.len();
        for (i, link) in links.iter().enumerate() {
            link.validate(i, k)?;
        }
        Ok(Self { links, noise_power })
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, k: usize) -> &Link {
        &self.links[k]
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }

    /// `ĥ_kℓ`.
    pub fn estimate(&self, k: usize, l: usize) -> &CVector {
        &self.links[k].estimates[l]
    }

    /// `(A_kℓ, ε_kℓ)`.
    pub fn ellipsoid(&self, k: usize, l: usize) -> &Ellipsoid {
        &self.links[k].uncertainty[l]
    }

    pub fn antennas(&self) -> Vec<usize> {
        self.links.iter().map(|l| l.antennas).collect()
    }

    /// `ε_kℓ` as a K×K matrix.
    pub fn radii(&self) -> Vec<Vec<f64>> {
        self.links
            .iter()
            .map(|l| l.uncertainty.iter().map(Ellipsoid::radius).collect())
            .collect()
    }

    pub fn with_noise_power(&self, noise_power: f64) -> Result<Self> {
        Self::new(self.links.clone(), noise_power)
    }

    /// Replaces every `ε_kℓ`, keeping the shapes.
    pub fn with_radii(&self, radii: &[Vec<f64>]) -> Result<Self> {
        let k = self.num_links();
        if radii.len() != k || radii.iter().any(|r| r.len() != k) {
            return Err(Error::param(format!("radius matrix must be {k}x{k}")));
        }
        let mut links = self.links.clone();
        for (link, row) in links.iter_mut().zip(radii) {
            for (e, &r) in link.uncertainty.iter_mut().zip(row) {
                *e = e.with_radius(r)?;
            }
        }
        Self::new(links, self.noise_power)
    }

    /// Same estimates, treated as exact: `ε = 0`, `A = I`.
    pub fn perfect_csi(&self) -> Self {
        let links = self
            .links
            .iter()
            .map(|link| Link {
                estimates: link.estimates.clone(),
                uncertainty: (0..link.uncertainty.len())
                    .map(|_| Ellipsoid {
                        shape: CMatrix::identity(link.antennas, link.antennas),
                        radius: 0.0,
                    })
                    .collect(),
                power_budget: link.power_budget,
                antennas: link.antennas,
            })
            .collect();
        Self {
            links,
            noise_power: self.noise_power,
        }
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn digest(&self) -> String {
        let text = self.to_json();
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&ScenarioFile::from(self)).expect("scenario encodes to JSON")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            field: json_error_field(&e),
            message: e.to_string(),
        })?;
        file.into_scenario()
    }
}

fn json_error_field(e: &serde_json::Error) -> String {
    // serde_json reports "missing field `x`" / "unknown field `x`" in the message.
    let msg = e.to_string();
    msg.split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| format!("line {} column {}", e.line(), e.column()))
}

/// One beamforming vector per transmitter.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet {
    pub w: Vec<CVector>,
}

impl BeamformerSet {
    pub fn new(w: Vec<CVector>) -> Self {
        Self { w }
    }

    pub fn zeros(s: &Scenario) -> Self {
        Self {
            w: s.links().iter().map(|l| CVector::zeros(l.antennas)).collect(),
        }
    }

    /// Dimensions match and `‖w_k‖² ≤ P_k` up to the power slack.
    pub fn check(&self, s: &Scenario) -> Result<()> {
        if self.w.len() != s.num_links() {
            return Err(Error::DimensionMismatch {
                context: "beamformer count",
                expected: s.num_links(),
                found: self.w.len(),
            });
        }
        for (k, (w, link)) in self.w.iter().zip(s.links()).enumerate() {
            if w.len() != link.antennas {
                return Err(Error::DimensionMismatch {
                    context: "beamformer dimension",
                    expected: link.antennas,
                    found: w.len(),
                });
            }
            if !is_finite_vector(w) {
                return Err(Error::NonFinite("beamformer"));
            }
            let power = w.norm_squared();
            if power > link.power_budget + TOLERANCES.power_slack {
                return Err(Error::invariant(
                    format!("w[{k}]"),
                    format!("power {power} exceeds budget {}", link.power_budget),
                ));
            }
        }
        Ok(())
    }
}

/// Seeded stream of uniform and complex Gaussian samples.
pub struct GaussianStream {
    rng: ChaCha20Rng,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha20Rng::seed_from_u64(seed),
        }
    }

    /// Uniform on `(0, 1]`.
    pub fn uniform(&mut self) -> f64 {
        ((self.rng.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// `CN(0, 1)` via Box–Muller on one pair of uniforms.
    pub fn complex_gaussian(&mut self) -> C64 {
        let u1 = self.uniform();
        let u2 = self.uniform();
        let r = (-u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        C64::new(r * theta.cos(), r * theta.sin())
    }

    pub fn complex_gaussian_vector(&mut self, n: usize) -> CVector {
        CVector::from_fn(n, |_, _| self.complex_gaussian())
    }

    /// Column-by-column draw of an `n × n` matrix.
    pub fn complex_gaussian_matrix(&mut self, n: usize) -> CMatrix {
        let mut m = CMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                m[(i, j)] = self.complex_gaussian();
            }
        }
        m
    }

    /// Uniform direction on the complex unit sphere of `C^n`.
    pub fn unit_vector(&mut self, n: usize) -> CVector {
        loop {
            let v = self.complex_gaussian_vector(n);
            let norm = v.norm();
            if norm > 1e-300 {
                return v.unscale(norm);
            }
        }
    }
}

/// Parameters of [`generate_scenario`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub antennas: Vec<usize>,
    /// `ε_kℓ`, K×K.
    pub radii: Vec<Vec<f64>>,
    pub powers: Vec<f64>,
    pub noise_power: f64,
    pub seed: u64,
}

impl ScenarioSpec {
    /// Uniform radius and power for every link.
    pub fn uniform(antennas: Vec<usize>, radius: f64, power: f64, noise_power: f64, seed: u64) -> Self {
        let k = antennas.len();
        Self {
            antennas,
            radii: vec![vec![radius; k]; k],
            powers: vec![power; k],
            noise_power,
            seed,
        }
    }
}

/// Random scenario: i.i.d. `CN(0, I)` estimates and random shapes normalised
/// to unit spectral norm.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<Scenario> {
    let k = spec.antennas.len();
    if k == 0 {
        return Err(Error::param("K must be at least 1"));
    }
    if spec.powers.len() != k {
        return Err(Error::param(format!("expected {k} power budgets, got {}", spec.powers.len())));
    }
    if spec.radii.len() != k || spec.radii.iter().any(|r| r.len() != k) {
        return Err(Error::param(format!("epsilon matrix must be {k}x{k}")));
    }
    if let Some(&n) = spec.antennas.iter().find(|&&n| n == 0) {
        return Err(Error::param(format!("antenna counts must be positive, got {n}")));
    }
    for row in &spec.radii {
        for &r in row {
            if !r.is_finite() || r < 0.0 {
                return Err(Error::param(format!("epsilon must be finite and nonnegative, got {r}")));
            }
        }
    }

    let mut stream = GaussianStream::new(spec.seed);
    let mut links = Vec::with_capacity(k);
    for tx in 0..k {
        let n = spec.antennas[tx];
        let mut estimates = Vec::with_capacity(k);
        let mut uncertainty = Vec::with_capacity(k);
        for rx in 0..k {
            estimates.push(stream.complex_gaussian_vector(n));
            let raw = stream.complex_gaussian_matrix(n);
            let sigma = largest_singular_value(&raw)?;
            let shape = raw.unscale(sigma);
            uncertainty.push(Ellipsoid::validated(
                shape,
                spec.radii[tx][rx],
                &format!("links[{tx}].ellipsoids[{rx}]"),
            )?);
        }
        links.push(Link {
            estimates,
            uncertainty,
            power_budget: spec.powers[tx],
            antennas: n,
        });
    }
    Scenario::new(links, spec.noise_power)
}

pub fn spherical_uncertainty(n: usize, radius: f64) -> Result<Ellipsoid> {
    Ellipsoid::spherical(n, radius)
}

pub fn save_scenario(s: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(&ScenarioFile::from(s)).expect("scenario encodes to JSON");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    Scenario::from_json(&text)
}

type ComplexPair = [f64; 2];

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(rename = "K")]
    k: usize,
    noise_power: f64,
    links: Vec<LinkFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LinkFile {
    antennas: usize,
    power_budget: f64,
    estimates: Vec<Vec<ComplexPair>>,
    ellipsoids: Vec<EllipsoidFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EllipsoidFile {
    shape: Vec<Vec<ComplexPair>>,
    radius: f64,
}

impl From<&Scenario> for ScenarioFile {
    fn from(s: &Scenario) -> Self {
        let pair = |z: &C64| [z.re, z.im];
        Self {
            k: s.num_links(),
            noise_power: s.noise_power,
            links: s
                .links
                .iter()
                .map(|link| LinkFile {
                    antennas: link.antennas,
                    power_budget: link.power_budget,
                    estimates: link.estimates.iter().map(|h| h.iter().map(pair).collect()).collect(),
                    ellipsoids: link
                        .uncertainty
                        .iter()
                        .map(|e| EllipsoidFile {
                            shape: e
                                .shape
                                .row_iter()
                                .map(|row| row.iter().map(pair).collect())
                                .collect(),
                            radius: e.radius,
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

impl ScenarioFile {
    fn into_scenario(self) -> Result<Scenario> {
        if self.links.len() != self.k {
            return Err(Error::invariant(
                "K",
                format!("K = {} but {} links are listed", self.k, self.links.len()),
            ));
        }
        let to_c = |p: &ComplexPair| C64::new(p[0], p[1]);
        let mut links = Vec::with_capacity(self.k);
        for (k, link) in self.links.into_iter().enumerate() {
            let n = link.antennas;
            let estimates = link
                .estimates
                .iter()
                .map(|h| CVector::from_iterator(h.len(), h.iter().map(to_c)))
                .collect();
            let mut uncertainty = Vec::with_capacity(link.ellipsoids.len());
            for (l, e) in link.ellipsoids.into_iter().enumerate() {
                let field = format!("links[{k}].ellipsoids[{l}]");
                let rows = e.shape.len();
                if rows != n || e.shape.iter().any(|r| r.len() != n) {
                    return Err(Error::invariant(
                        format!("{field}.shape"),
                        format!("expected a {n}x{n} matrix"),
                    ));
                }
                let shape = CMatrix::from_fn(n, n, |i, j| to_c(&e.shape[i][j]));
                uncertainty.push(Ellipsoid::validated(shape, e.radius, &field)?);
            }
            links.push(Link {
                estimates,
                uncertainty,
                power_budget: link.power_budget,
                antennas: n,
            });
        }
        Scenario::new(links, self.noise_power)
    }
}
