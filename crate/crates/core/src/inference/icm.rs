use crate::energy::{argmin, total_energy, EnergyModel, Labeling};
use crate::error::Result;

/// Upper bound on raster sweeps; ICM terminates long before on any finite
/// model, this only guards against pathological float ties.
pub const MAX_SWEEPS: usize = 10_000;

#[derive(Debug, Clone)]
pub struct IcmOutcome {
    pub labeling: Labeling,
    pub energy: f64,
    pub sweeps: usize,
    pub converged: bool,
}

/// Iterated conditional modes: raster sweeps setting each node to the argmin
/// of its conditional energy until a sweep changes nothing.
pub fn icm(model: &EnergyModel, init: &[usize]) -> Result<Labeling> {
    Ok(icm_detailed(model, init)?.labeling)
}

pub fn icm_detailed(model: &EnergyModel, init: &[usize]) -> Result<IcmOutcome> {
    model.check_labeling(init)?;
    let mut y = init.to_vec();
    let mut local = vec![0.0; model.n_classes()];
    let mut sweeps = 0;
    let mut converged = false;
    while sweeps < MAX_SWEEPS {
        sweeps += 1;
        let mut changed = false;
        for i in 0..y.len() {
            model.local_energies(i, &y, &mut local);
            let best = argmin(&local);
            if best != y[i] {
                debug_assert!(local[best] <= local[y[i]]);
                y[i] = best;
                changed = true;
            }
        }
        if !changed {
            converged = true;
            break;
        }
    }
    let energy = total_energy(model, &y);
    Ok(IcmOutcome {
        labeling: y,
        energy,
        sweeps,
        converged,
    })
}
