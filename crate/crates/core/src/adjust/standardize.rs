use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::models::ConditionalIncidence;
use crate::survival::{validate_grid, CifSet, Cohort};

/// Conditional curves `I_k(t_j | x_i, z)` of every record under one treatment value.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmPredictions {
    pub z: u8,
    grid: Vec<f64>,
    n: usize,
    /// Row-major `n x grid.len()`.
    survival: Vec<f64>,
    incidences: Vec<Vec<f64>>,
}

impl ArmPredictions {
    pub fn compute<M: ConditionalIncidence + ?Sized>(
        model: &M,
        cohort: &Cohort,
        z: u8,
        grid: &[f64],
        exec: Exec,
    ) -> Result<Self> {
        validate_grid(grid)?;
        if cohort.is_empty() {
            return Err(Error::EmptyCohort);
        }
        let recs = cohort.records();
        let curves = exec
            .map(recs.len(), |i| model.conditional_cif(&recs[i].covariates, z, grid))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let k = model.num_causes();
        let mut survival = Vec::with_capacity(recs.len() * grid.len());
        let mut incidences = vec![Vec::with_capacity(recs.len() * grid.len()); k];
        for c in &curves {
            survival.extend_from_slice(&c.survival.values);
            for (dst, src) in incidences.iter_mut().zip(&c.incidences) {
                dst.extend_from_slice(&src.values);
            }
        }
        Ok(Self {
            z,
            grid: grid.to_vec(),
            n: recs.len(),
            survival,
            incidences,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Row-major `n x grid.len()` block for `cause` (1-based).
    pub fn cause(&self, cause: usize) -> &[f64] {
        &self.incidences[cause - 1]
    }

    fn column_means(&self, block: &[f64]) -> Vec<f64> {
        let g = self.grid.len();
        let mut out = vec![0.0; g];
        for row in block.chunks_exact(g) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out.iter().map(|s| s / self.n as f64).collect()
    }

    /// Average of the conditional curves over all records.
    pub fn standardized(&self) -> CifSet {
        let surv = self.column_means(&self.survival);
        let inc = self.incidences.iter().map(|b| self.column_means(b)).collect();
        CifSet::from_grid(&self.grid, surv, inc)
    }
}

/// `(1/n) sum_i I_k(t | X_i, Z = z)` over every record of `cohort`, both arms included.
pub fn standardized_cuminc<M: ConditionalIncidence + ?Sized>(
    model: &M,
    cohort: &Cohort,
    z: u8,
    grid: &[f64],
) -> Result<CifSet> {
    Ok(ArmPredictions::compute(model, cohort, z, grid, Exec::Sequential)?.standardized())
}
