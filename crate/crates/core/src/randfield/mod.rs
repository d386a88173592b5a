//! Matérn covariances, Gaussian field sampling, and synthetic study data.

mod dataset;

use nalgebra::{Cholesky, DMatrix, DVector, Matrix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

pub use dataset::{Dataset, Family, Split, Truth};

use crate::error::{PicarError, Result};
use crate::link::{logistic, ordinal_probs};
use crate::mesh::Point2;

/// Diagonal jitter added before factoring a covariance.
pub const COVARIANCE_JITTER: f64 = 1e-10;

/// Smoothness values with closed-form Matérn covariances.
pub const SUPPORTED_NU: [f64; 4] = [0.5, 1.5, 2.5, f64::INFINITY];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    pub sigma2: f64,
    pub phi: f64,
    /// `null` in JSON stands for the squared-exponential limit.
    #[serde(with = "nu_serde")]
    pub nu: f64,
}

mod nu_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(nu: &f64, s: S) -> Result<S::Ok, S::Error> {
        if nu.is_infinite() {
            s.serialize_none()
        } else {
            s.serialize_f64(*nu)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl MaternParams {
    pub fn new(sigma2: f64, phi: f64, nu: f64) -> Result<Self> {
        let params = MaternParams { sigma2, phi, nu };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0 && self.sigma2.is_finite()) {
            return Err(PicarError::InvalidArgument(format!(
                "partial sill must be positive, got {}",
                self.sigma2
            )));
        }
        if !(self.phi > 0.0 && self.phi.is_finite()) {
            return Err(PicarError::InvalidArgument(format!(
                "range must be positive, got {}",
                self.phi
            )));
        }
        if !SUPPORTED_NU.contains(&self.nu) {
            return Err(PicarError::UnsupportedSmoothness(self.nu));
        }
        Ok(())
    }

    /// The study default: unit sill, range 0.2, smoothness 2.5.
    pub fn reference() -> Self {
        MaternParams {
            sigma2: 1.0,
            phi: 0.2,
            nu: 2.5,
        }
    }
}

/// Matérn covariance at distance `h`.
pub fn matern(h: f64, params: &MaternParams) -> Result<f64> {
    params.validate()?;
    if !(h >= 0.0) {
        return Err(PicarError::InvalidArgument(format!("distance must be nonnegative, got {h}")));
    }
    Ok(matern_unchecked(h, params))
}

pub(crate) fn matern_unchecked(h: f64, params: &MaternParams) -> f64 {
    let MaternParams { sigma2, phi, nu } = *params;
    let r = h / phi;
    if nu == 0.5 {
        sigma2 * (-r).exp()
    } else if nu == 1.5 {
        let a = 3f64.sqrt() * r;
        sigma2 * (1.0 + a) * (-a).exp()
    } else if nu == 2.5 {
        let a = 5f64.sqrt() * r;
        sigma2 * (1.0 + a + a * a / 3.0) * (-a).exp()
    } else {
        sigma2 * (-0.5 * r * r).exp()
    }
}

/// Dense covariance matrix over `points`.
pub fn covariance_matrix(points: &[Point2], params: &MaternParams) -> DMatrix<f64> {
    let n = points.len();
    let mut c = DMatrix::zeros(n, n);
    for j in 0..n {
        c[(j, j)] = params.sigma2;
        for i in (j + 1)..n {
            let v = matern_unchecked(points[i].dist(&points[j]), params);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    c
}

/// Lower Cholesky factor of the jittered covariance.
pub fn covariance_factor(points: &[Point2], params: &MaternParams) -> Result<DMatrix<f64>> {
    params.validate()?;
    let mut c = covariance_matrix(points, params);
    for i in 0..points.len() {
        c[(i, i)] += COVARIANCE_JITTER;
    }
    Cholesky::new(c)
        .map(|ch| ch.unpack())
        .ok_or(PicarError::CovarianceSingular)
}

fn standard_normals(n: usize, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// `W = L u` for the Cholesky factor `L` of the covariance at `locations`.
pub fn sample_gp(locations: &[Point2], params: &MaternParams, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_gp_with(locations, params, &mut rng)
}

pub fn sample_gp_with(
    locations: &[Point2],
    params: &MaternParams,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    let l = covariance_factor(locations, params)?;
    let u = standard_normals(locations.len(), rng);
    Ok((l * u).as_slice().to_vec())
}

/// Shared settings for every study generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub n: usize,
    pub n_cv: usize,
    pub beta: Vec<f64>,
    pub matern: MaternParams,
    /// Variance of an optional iid Gaussian term added to the linear predictor.
    #[serde(default)]
    pub nugget: Option<f64>,
}

impl Design {
    /// Sample sizes and parameters of the binary reference study.
    pub fn reference(n: usize, n_cv: usize) -> Self {
        Design {
            n,
            n_cv,
            beta: vec![1.0, 1.0],
            matern: MaternParams::reference(),
            nugget: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.n_cv == 0 {
            return Err(PicarError::InvalidArgument(format!(
                "need positive fit and validation sizes, got {} and {}",
                self.n, self.n_cv
            )));
        }
        if self.beta.is_empty() {
            return Err(PicarError::InvalidArgument("need at least one covariate".into()));
        }
        if let Some(v) = self.nugget {
            if !(v >= 0.0) {
                return Err(PicarError::InvalidArgument(format!("nugget variance {v} < 0")));
            }
        }
        self.matern.validate()
    }
}

/// Sites, covariates and linear predictor drawn jointly for fit and cv.
struct Latent {
    locations: Vec<Point2>,
    x: DMatrix<f64>,
    w: Vec<f64>,
    b: Option<Vec<f64>>,
    eta: Vec<f64>,
}

fn draw_sites(total: usize, k: usize, rng: &mut ChaCha8Rng) -> (Vec<Point2>, DMatrix<f64>) {
    let locations: Vec<Point2> = (0..total)
        .map(|_| Point2::new(rng.random::<f64>(), rng.random::<f64>()))
        .collect();
    // Covariates iid uniform on (-1, 1).
    let x = DMatrix::from_fn(total, k, |_, _| rng.random_range(-1.0..1.0));
    (locations, x)
}

fn linear_predictor(x: &DMatrix<f64>, beta: &[f64], w: &[f64]) -> Vec<f64> {
    (0..x.nrows())
        .map(|i| (0..beta.len()).map(|j| x[(i, j)] * beta[j]).sum::<f64>() + w[i])
        .collect()
}

fn add_nugget(eta: &mut [f64], nugget: Option<f64>, rng: &mut ChaCha8Rng) {
    if let Some(var) = nugget.filter(|&v| v > 0.0) {
        let normal = Normal::new(0.0, var.sqrt()).expect("finite sd");
        for e in eta.iter_mut() {
            *e += normal.sample(rng);
        }
    }
}

fn draw_latent(design: &Design, rng: &mut ChaCha8Rng) -> Result<Latent> {
    design.validate()?;
    let total = design.n + design.n_cv;
    let (locations, x) = draw_sites(total, design.beta.len(), rng);
    let w = sample_gp_with(&locations, &design.matern, rng)?;
    let mut eta = linear_predictor(&x, &design.beta, &w);
    add_nugget(&mut eta, design.nugget, rng);
    Ok(Latent {
        locations,
        x,
        w,
        b: None,
        eta,
    })
}

fn assemble(
    family: Family,
    design: &Design,
    latent: Latent,
    z: Vec<f64>,
    seed: u64,
    extra: impl FnOnce(&mut Truth),
) -> Dataset {
    let mut truth = Truth {
        beta: design.beta.clone(),
        matern: design.matern,
        cutoffs: None,
        cross_covariance: None,
        nugget: design.nugget,
        seed,
        w: latent.w,
        b: latent.b,
    };
    extra(&mut truth);
    Dataset::from_joint(family, latent.locations, latent.x, z, design.n, Some(truth))
}

/// Bernoulli responses with a logit link.
pub fn gen_binary(design: &Design, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latent = draw_latent(design, &mut rng)?;
    let z = latent
        .eta
        .iter()
        .map(|&e| {
            let p = logistic(e);
            f64::from(u8::from(Bernoulli::new(p).expect("probability in [0,1]").sample(&mut rng)))
        })
        .collect();
    Ok(assemble(Family::Binary, design, latent, z, seed, |_| {}))
}

fn poisson_draw(eta: f64, rng: &mut ChaCha8Rng) -> f64 {
    let rate = eta.exp();
    if rate <= 0.0 {
        return 0.0;
    }
    Poisson::new(rate).map(|d| d.sample(rng)).unwrap_or(f64::NAN)
}

/// Poisson responses with a log link.
pub fn gen_count(design: &Design, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latent = draw_latent(design, &mut rng)?;
    let z = latent.eta.iter().map(|&e| poisson_draw(e, &mut rng)).collect();
    Ok(assemble(Family::Count, design, latent, z, seed, |_| {}))
}

/// Ordinal responses in `1..=J` with `J = cutoffs.len() + 1`.
pub fn gen_ordinal(design: &Design, cutoffs: &[f64], seed: u64) -> Result<Dataset> {
    if cutoffs.is_empty()
        || cutoffs[0] != 0.0
        || cutoffs.windows(2).any(|w| !(w[1] > w[0]))
    {
        return Err(PicarError::InvalidCutoffs(cutoffs.to_vec()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latent = draw_latent(design, &mut rng)?;
    let z = latent
        .eta
        .iter()
        .map(|&e| {
            let probs = ordinal_probs(cutoffs, e);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (j, p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return (j + 1) as f64;
                }
            }
            probs.len() as f64
        })
        .collect();
    let categories = cutoffs.len() + 1;
    Ok(assemble(Family::Ordinal { categories }, design, latent, z, seed, |t| {
        t.cutoffs = Some(cutoffs.to_vec())
    }))
}

/// Jointly samples `(W, B)` with covariance `R ⊗ T` as `vec(L_R U L_T')`.
/// Returns the two fields site by site.
pub fn sample_cross_fields(
    locations: &[Point2],
    params: &MaternParams,
    cross: &[[f64; 2]; 2],
    rng: &mut impl Rng,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let t = Matrix2::new(cross[0][0], cross[0][1], cross[1][0], cross[1][1]);
    if (cross[0][1] - cross[1][0]).abs() > 0.0 {
        return Err(PicarError::CrossCovarianceNotSpd);
    }
    let lt = Cholesky::new(t).ok_or(PicarError::CrossCovarianceNotSpd)?.unpack();
    // R is the correlation: unit sill.
    let corr = MaternParams {
        sigma2: 1.0,
        ..*params
    };
    let lr = covariance_factor(locations, &corr)?;
    let n = locations.len();
    let u = DMatrix::from_fn(n, 2, |_, _| StandardNormal.sample(rng));
    let y = lr * u * lt.transpose();
    Ok((y.column(0).iter().copied().collect(), y.column(1).iter().copied().collect()))
}

/// Poisson responses with a spatially varying slope on the first covariate:
/// `eta = X beta + X_1 * B + W`.
pub fn gen_svc(design: &Design, cross: &[[f64; 2]; 2], seed: u64) -> Result<Dataset> {
    design.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = design.n + design.n_cv;
    let (locations, x) = draw_sites(total, design.beta.len(), &mut rng);
    let (w, b) = sample_cross_fields(&locations, &design.matern, cross, &mut rng)?;
    let mut eta = linear_predictor(&x, &design.beta, &w);
    for (i, e) in eta.iter_mut().enumerate() {
        *e += x[(i, 0)] * b[i];
    }
    add_nugget(&mut eta, design.nugget, &mut rng);
    let z = eta.iter().map(|&e| poisson_draw(e, &mut rng)).collect();
    let latent = Latent {
        locations,
        x,
        w,
        b: Some(b),
        eta,
    };
    Ok(assemble(Family::Svc, design, latent, z, seed, |t| {
        t.cross_covariance = Some(*cross)
    }))
}

/// The cross-covariance used in the spatially varying coefficient study.
pub const REFERENCE_CROSS_COVARIANCE: [[f64; 2]; 2] = [[1.0, 0.3], [0.3, 0.2]];
