use crate::error::DesignError;
use crate::sobol;
use crate::Dose;

/// Number of grid intervals per axis for `step`, which must divide 1.
pub fn grid_steps(step: f64) -> Result<usize, DesignError> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(DesignError::InvalidArgument(format!(
            "grid step {step} must lie in (0, 1]"
        )));
    }
    let steps = (1.0 / step).round();
    if (steps * step - 1.0).abs() > 1e-9 {
        return Err(DesignError::InvalidArgument(format!(
            "grid step {step} does not divide 1"
        )));
    }
    Ok(steps as usize)
}

/// Full lattice over `[0, 1]^dims` in lexicographic order (first coordinate slowest).
pub fn make_grid(dims: usize, step: f64) -> Result<Vec<Dose>, DesignError> {
    if dims == 0 {
        return Err(DesignError::InvalidArgument("grid needs at least one dimension".into()));
    }
    let steps = grid_steps(step)?;
    let per_axis = steps + 1;
    let total = per_axis
        .checked_pow(dims as u32)
        .filter(|&t| t <= 10_000_000)
        .ok_or_else(|| DesignError::InvalidArgument("grid too large".into()))?;
    Ok((0..total)
        .map(|mut idx| {
            let mut coords = vec![0.0; dims];
            for c in coords.iter_mut().rev() {
                *c = (idx % per_axis) as f64 / steps as f64;
                idx /= per_axis;
            }
            crate::gp::DoseCombination(coords)
        })
        .collect())
}

/// Nearest lattice value, ties toward the lower one.
pub fn snap(x: f64, steps: usize) -> f64 {
    let t = x.clamp(0.0, 1.0) * steps as f64;
    let lower = t.floor();
    let k = if t - lower > 0.5 { lower + 1.0 } else { lower };
    k.min(steps as f64) / steps as f64
}

/// First `count` Sobol points after the origin, snapped to the grid.
pub fn initial_design(count: usize, dims: usize, step: f64) -> Result<Vec<Dose>, DesignError> {
    let steps = grid_steps(step)?;
    let points = sobol::sobol_points(dims, count)
        .ok_or_else(|| DesignError::InvalidArgument(format!("Sobol points unavailable in {dims} dimensions")))?;
    Ok(points
        .into_iter()
        .map(|p| crate::gp::DoseCombination(p.into_iter().map(|x| snap(x, steps)).collect()))
        .collect())
}

/// Position of `dose` on a grid built by [`make_grid`].
pub fn grid_index(dose: &Dose, step: f64) -> Option<usize> {
    let steps = grid_steps(step).ok()?;
    let mut idx = 0usize;
    for &c in dose.coords() {
        let k = (c * steps as f64).round();
        if !(0.0..=steps as f64).contains(&k) || (k / steps as f64 - c).abs() > 1e-12 {
            return None;
        }
        idx = idx * (steps + 1) + k as usize;
    }
    Some(idx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_examples() {
        let g = make_grid(2, 0.25).unwrap();
        assert_eq!(g.len(), 25);
        assert_eq!(g[0].coords(), [0.0, 0.0]);
        assert_eq!(g[24].coords(), [1.0, 1.0]);
        assert_eq!(g[6].coords(), [0.25, 0.25]);
        let g1: Vec<f64> = make_grid(1, 0.5).unwrap().into_iter().map(|d| d.0[0]).collect();
        assert_eq!(g1, [0.0, 0.5, 1.0]);
        assert_eq!(make_grid(3, 0.1).unwrap().len(), 1331);
        assert!(make_grid(2, 0.3).is_err());
        assert!(make_grid(2, 0.0).is_err());
    }

    #[test]
    fn lattice_is_sorted_and_indexed() {
        let g = make_grid(2, 0.125).unwrap();
        for (i, w) in g.windows(2).enumerate() {
            assert_eq!(w[0].lex_cmp(&w[1]), std::cmp::Ordering::Less);
            assert_eq!(grid_index(&w[0], 0.125), Some(i));
        }
        assert_eq!(grid_index(&crate::gp::DoseCombination(vec![0.3, 0.5]), 0.125), None);
    }

    #[test]
    fn snapping_ties_go_down() {
        assert_eq!(snap(0.375, 4), 0.25);
        assert_eq!(snap(0.875, 4), 0.75);
        assert_eq!(snap(0.8751, 4), 1.0);
        assert_eq!(snap(0.125, 4), 0.0);
        assert_eq!(snap(0.1875, 4), 0.25);
        assert_eq!(snap(1.0, 4), 1.0);
    }

    #[test]
    fn initial_designs() {
        let d = initial_design(5, 2, 0.25).unwrap();
        let coords: Vec<&[f64]> = d.iter().map(|p| p.coords()).collect();
        assert_eq!(
            coords,
            [[0.5, 0.5], [0.75, 0.25], [0.25, 0.75], [0.25, 0.25], [0.75, 0.75]]
        );
        let ten = initial_design(10, 2, 0.25).unwrap();
        assert_eq!(ten[..5], d[..]);
        assert_eq!(ten[9].coords(), [1.0, 0.0]);
        for p in initial_design(40, 3, 0.25).unwrap() {
            assert!(grid_index(&p, 0.25).is_some());
        }
    }
}
