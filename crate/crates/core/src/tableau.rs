//! Explicit Runge-Kutta methods as data, and the coefficients of the adjoint
//! integrator paired with each of them.
//!
//! The adjoint integrator runs backward over the stages of a step. For a
//! stage `i` with `b[i] != 0` the intermediate adjoint is
//!
//! ```text
//! Λ_i = λ_{n+1} - h Σ_{j>i} b̃_j (a[j][i] / b[i]) l_j
//! ```
//!
//! and for a stage with `b[i] == 0` (the set `I₀`) it is
//!
//! ```text
//! Λ_i = - Σ_{j>i} b̃_j a[j][i] l_j
//! ```
//!
//! with `b̃_j = b[j]` outside `I₀` and `b̃_j = h` inside it. The step update
//! is `λ_n = λ_{n+1} - h Σ_i b̃_i l_i`. Pairing the forward method with these
//! coefficients conserves every bilinear invariant of the variational and
//! adjoint systems, so `λ_n` is the exact gradient of the discrete solution.

use crate::error::{Error, Result};

/// Names accepted by [`builtin_tableau`].
pub const BUILTIN_TABLEAUS: [&str; 4] = ["heun_euler", "bosh3", "dopri5", "dopri8"];

const CONSISTENCY_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct ButcherTableau {
    pub name: String,
    /// Classical order `p` of the propagated solution.
    pub order: u32,
    /// Order of the embedded solution used for error estimation.
    pub embedded_order: Option<u32>,
    /// Strictly lower-triangular `s × s` stage matrix.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    /// Weights of the embedded lower-order solution.
    pub b_err: Option<Vec<f64>>,
    /// Last stage of a step equals the first stage of the next one.
    pub fsal: bool,
}

impl ButcherTableau {
    /// Number of rows in the tableau.
    pub fn stages(&self) -> usize {
        self.b.len()
    }

    /// Function evaluations per accepted step once FSAL reuse is taken
    /// into account.
    pub fn evals_per_step(&self) -> usize {
        if self.fsal {
            self.stages() - 1
        } else {
            self.stages()
        }
    }

    /// Number of leading stages that influence `x_{n+1}`.
    ///
    /// Trailing stages with zero weight that no other stage reads (the FSAL
    /// stage of dopri5/bosh3) only feed the error estimator.
    pub fn active_stages(&self) -> usize {
        let s = self.stages();
        let mut active = s;
        while active > 1 {
            let last = active - 1;
            let read_later = (0..s).any(|j| self.a[j][last] != 0.0);
            if self.b[last] == 0.0 && !read_later {
                active -= 1;
            } else {
                break;
            }
        }
        active
    }

    /// Checks the explicit-method and consistency invariants.
    pub fn validate(&self) -> Result<()> {
        let s = self.stages();
        let fail = |reason: String| Error::InvalidTableau { name: self.name.clone(), reason };
        if s == 0 {
            return Err(fail("no stages".into()));
        }
        if self.c.len() != s || self.a.len() != s || self.a.iter().any(|row| row.len() != s) {
            return Err(fail("inconsistent dimensions".into()));
        }
        if let Some(e) = &self.b_err {
            if e.len() != s {
                return Err(fail("embedded weights have wrong length".into()));
            }
        }
        for (i, row) in self.a.iter().enumerate() {
            if row[i..].iter().any(|&v| v != 0.0) {
                return Err(fail(format!("row {i} is not strictly lower triangular")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - self.c[i]).abs() > CONSISTENCY_TOL {
                return Err(fail(format!("c[{i}] differs from its row sum by {:e}", sum - self.c[i])));
            }
        }
        let bsum: f64 = self.b.iter().sum();
        if (bsum - 1.0).abs() > CONSISTENCY_TOL {
            return Err(fail(format!("weights sum to {bsum}")));
        }
        if self.fsal {
            let last = &self.a[s - 1];
            if last.iter().zip(&self.b).any(|(x, y)| (x - y).abs() > CONSISTENCY_TOL) {
                return Err(fail("fsal flag set but last row differs from b".into()));
            }
        }
        Ok(())
    }

    /// Coefficients of the backward-explicit adjoint integrator paired with
    /// this method, restricted to the active stages.
    pub fn adjoint_coefficients(&self) -> AdjointCoefficients {
        AdjointCoefficients::derive(self)
    }
}

/// Weight `b̃_i` of a stage in the adjoint update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdjointWeight {
    /// `b̃_i = b_i`.
    Fixed(f64),
    /// `b̃_i = h_n`, resolved per step since adaptive steps vary.
    StepSize,
}

impl AdjointWeight {
    pub fn resolve(self, h: f64) -> f64 {
        match self {
            AdjointWeight::Fixed(b) => b,
            AdjointWeight::StepSize => h,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjointCoefficients {
    b: Vec<f64>,
    tilde_b: Vec<AdjointWeight>,
    zero_set: Vec<usize>,
    /// For stage `i`: the `(j, w_ij)` pairs with `j > i` and `w_ij != 0`.
    /// Outside `I₀`, `w_ij = a[j][i] / b[i]`; inside, `w_ij = a[j][i]`.
    dependencies: Vec<Vec<(usize, f64)>>,
}

impl AdjointCoefficients {
    fn derive(tab: &ButcherTableau) -> Self {
        let s = tab.active_stages();
        let b = tab.b[..s].to_vec();
        let zero_set: Vec<usize> = (0..s).filter(|&i| b[i] == 0.0).collect();
        let tilde_b = b
            .iter()
            .map(|&bi| if bi == 0.0 { AdjointWeight::StepSize } else { AdjointWeight::Fixed(bi) })
            .collect();
        let dependencies = (0..s)
            .map(|i| {
                (0..s)
                    .filter(|&j| tab.a[j][i] != 0.0)
                    .map(|j| {
                        let w = if b[i] == 0.0 { tab.a[j][i] } else { tab.a[j][i] / b[i] };
                        (j, w)
                    })
                    .collect()
            })
            .collect();
        AdjointCoefficients { b, tilde_b, zero_set, dependencies }
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    /// Stage indices (0-based) with vanishing weight.
    pub fn zero_set(&self) -> &[usize] {
        &self.zero_set
    }

    pub fn in_zero_set(&self, i: usize) -> bool {
        self.b[i] == 0.0
    }

    pub fn tilde_b(&self, i: usize) -> AdjointWeight {
        self.tilde_b[i]
    }

    /// Later stages whose `l_j` enter `Λ_i`, with their weights.
    pub fn dependencies(&self, i: usize) -> &[(usize, f64)] {
        &self.dependencies[i]
    }

    /// The weight `w_ij` (zero when stage `j` does not feed `Λ_i`).
    pub fn lambda_weight(&self, i: usize, j: usize) -> f64 {
        self.dependencies[i]
            .iter()
            .find(|(k, _)| *k == j)
            .map_or(0.0, |(_, w)| *w)
    }

    /// The Runge-Kutta matrix `A` realized by the backward form, written
    /// forward as `Λ_i = λ_n + h Σ_j A_ij l_j`. Only meaningful for
    /// `i, j ∉ I₀`.
    pub fn realized_a(&self, i: usize, j: usize) -> f64 {
        self.b[j] * (1.0 - self.lambda_weight(i, j))
    }

    /// Largest `|b_i A_ij + b_j a_ji - b_i b_j|` over stage pairs outside `I₀`.
    pub fn symplectic_residual(&self, tab: &ButcherTableau) -> f64 {
        let s = self.stages();
        let mut worst: f64 = 0.0;
        for i in (0..s).filter(|&i| !self.in_zero_set(i)) {
            for j in (0..s).filter(|&j| !self.in_zero_set(j)) {
                let r = self.b[i] * self.realized_a(i, j) + self.b[j] * tab.a[j][i] - self.b[i] * self.b[j];
                worst = worst.max(r.abs());
            }
        }
        worst
    }
}

/// Looks up one of the compiled-in methods.
pub fn builtin_tableau(name: &str) -> Result<ButcherTableau> {
    let tab = match name {
        "heun_euler" => heun_euler(),
        "bosh3" => bosh3(),
        "dopri5" => dopri5(),
        "dopri8" => dopri8(),
        other => return Err(Error::UnknownMethod(other.to_string())),
    };
    debug_assert!(tab.validate().is_ok());
    Ok(tab)
}

fn square(s: usize) -> Vec<Vec<f64>> {
    vec![vec![0.0; s]; s]
}

fn heun_euler() -> ButcherTableau {
    let mut a = square(2);
    a[1][0] = 1.0;
    ButcherTableau {
        name: "heun_euler".into(),
        order: 2,
        embedded_order: Some(1),
        a,
        b: vec![0.5, 0.5],
        c: vec![0.0, 1.0],
        b_err: Some(vec![1.0, 0.0]),
        fsal: false,
    }
}

/// Bogacki-Shampine 3(2), stored with its FSAL stage.
fn bosh3() -> ButcherTableau {
    let mut a = square(4);
    a[1][0] = 1.0 / 2.0;
    a[2][1] = 3.0 / 4.0;
    a[3][0] = 2.0 / 9.0;
    a[3][1] = 1.0 / 3.0;
    a[3][2] = 4.0 / 9.0;
    ButcherTableau {
        name: "bosh3".into(),
        order: 3,
        embedded_order: Some(2),
        a,
        b: vec![2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0, 0.0],
        c: vec![0.0, 1.0 / 2.0, 3.0 / 4.0, 1.0],
        b_err: Some(vec![7.0 / 24.0, 1.0 / 4.0, 1.0 / 3.0, 1.0 / 8.0]),
        fsal: true,
    }
}

/// Dormand-Prince 5(4), seven rows with the last one reused (FSAL).
fn dopri5() -> ButcherTableau {
    let mut a = square(7);
    a[1][0] = 1.0 / 5.0;
    a[2][0] = 3.0 / 40.0;
    a[2][1] = 9.0 / 40.0;
    a[3][0] = 44.0 / 45.0;
    a[3][1] = -56.0 / 15.0;
    a[3][2] = 32.0 / 9.0;
    a[4][0] = 19372.0 / 6561.0;
    a[4][1] = -25360.0 / 2187.0;
    a[4][2] = 64448.0 / 6561.0;
    a[4][3] = -212.0 / 729.0;
    a[5][0] = 9017.0 / 3168.0;
    a[5][1] = -355.0 / 33.0;
    a[5][2] = 46732.0 / 5247.0;
    a[5][3] = 49.0 / 176.0;
    a[5][4] = -5103.0 / 18656.0;
    let b = vec![
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    a[6] = b.clone();
    ButcherTableau {
        name: "dopri5".into(),
        order: 5,
        embedded_order: Some(4),
        a,
        b,
        c: vec![0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0],
        b_err: Some(vec![
            5179.0 / 57600.0,
            0.0,
            7571.0 / 16695.0,
            393.0 / 640.0,
            -92097.0 / 339200.0,
            187.0 / 2100.0,
            1.0 / 40.0,
        ]),
        fsal: true,
    }
}

/// Dormand-Prince 8(5), the twelve-stage propagating part of DOP853 with
/// its fifth-order error estimator.
fn dopri8() -> ButcherTableau {
    let mut a = square(12);
    a[1][0] = 5.260_015_195_876_773E-2;

    a[2][0] = 1.972_505_698_453_79E-2;
    a[2][1] = 5.917_517_095_361_37E-2;

    a[3][0] = 2.958_758_547_680_685E-2;
    a[3][2] = 8.876_275_643_042_054E-2;

    a[4][0] = 2.413_651_341_592_667E-1;
    a[4][2] = -8.845_494_793_282_861E-1;
    a[4][3] = 9.248_340_032_617_92E-1;

    a[5][0] = 3.703_703_703_703_703_5E-2;
    a[5][3] = 1.708_286_087_294_738_6E-1;
    a[5][4] = 1.254_676_875_668_224_2E-1;

    a[6][0] = 3.710_937_5E-2;
    a[6][3] = 1.702_522_110_195_440_5E-1;
    a[6][4] = 6.021_653_898_045_596E-2;
    a[6][5] = -1.757_812_5E-2;

    a[7][0] = 3.709_200_011_850_479E-2;
    a[7][3] = 1.703_839_257_122_399_8E-1;
    a[7][4] = 1.072_620_304_463_732_8E-1;
    a[7][5] = -1.531_943_774_862_440_2E-2;
    a[7][6] = 8.273_789_163_814_023E-3;

    a[8][0] = 6.241_109_587_160_757E-1;
    a[8][3] = -3.360_892_629_446_941_4;
    a[8][4] = -8.682_193_468_417_26E-1;
    a[8][5] = 2.759_209_969_944_671E1;
    a[8][6] = 2.015_406_755_047_789_4E1;
    a[8][7] = -4.348_988_418_106_996E1;

    a[9][0] = 4.776_625_364_382_643_4E-1;
    a[9][3] = -2.488_114_619_971_667_7;
    a[9][4] = -5.902_908_268_368_43E-1;
    a[9][5] = 2.123_005_144_818_119_3E1;
    a[9][6] = 1.527_923_363_288_242_3E1;
    a[9][7] = -3.328_821_096_898_486E1;
    a[9][8] = -2.033_120_170_850_862_7E-2;

    a[10][0] = -9.371_424_300_859_873E-1;
    a[10][3] = 5.186_372_428_844_064;
    a[10][4] = 1.091_437_348_996_729_5;
    a[10][5] = -8.149_787_010_746_927;
    a[10][6] = -1.852_006_565_999_696E1;
    a[10][7] = 2.273_948_709_935_050_5E1;
    a[10][8] = 2.493_605_552_679_652_3;
    a[10][9] = -3.046_764_471_898_219_6;

    a[11][0] = 2.273_310_147_516_538;
    a[11][3] = -1.053_449_546_673_725E1;
    a[11][4] = -2.000_872_058_224_862_5;
    a[11][5] = -1.795_893_186_311_88E1;
    a[11][6] = 2.794_888_452_941_996E1;
    a[11][7] = -2.858_998_277_135_023_5;
    a[11][8] = -8.872_856_933_530_63;
    a[11][9] = 1.236_056_717_579_430_3E1;
    a[11][10] = 6.433_927_460_157_636E-1;

    let b = vec![
        5.429_373_411_656_876_5E-2,
        0.0,
        0.0,
        0.0,
        0.0,
        4.450_312_892_752_409,
        1.891_517_899_314_500_3,
        -5.801_203_960_010_585,
        3.111_643_669_578_199E-1,
        -1.521_609_496_625_161E-1,
        2.013_654_008_040_303_4E-1,
        4.471_061_572_777_259E-2,
    ];
    // Error coefficients of the 5th-order estimator; b_err = b - er.
    let er = [
        1.312_004_499_419_488E-2,
        0.0,
        0.0,
        0.0,
        0.0,
        -1.225_156_446_376_204_4,
        -4.957_589_496_572_502E-1,
        1.664_377_182_454_986_4,
        -3.503_288_487_499_736_6E-1,
        3.341_791_187_130_175E-1,
        8.192_320_648_511_571E-2,
        -2.235_530_786_388_629_4E-2,
    ];
    let b_err = b.iter().zip(er).map(|(bi, ei)| bi - ei).collect();
    ButcherTableau {
        name: "dopri8".into(),
        order: 8,
        embedded_order: Some(5),
        a,
        b,
        c: vec![
            0.0,
            5.260_015_195_876_773E-2,
            7.890_022_793_815_16E-2,
            1.183_503_419_072_274E-1,
            2.816_496_580_927_726E-1,
            3.333_333_333_333_333E-1,
            0.25,
            3.076_923_076_923_077E-1,
            6.512_820_512_820_513E-1,
            0.6,
            8.571_428_571_428_571E-1,
            1.0,
        ],
        b_err: Some(b_err),
        fsal: false,
    }
}
