use elastomono::model::{build_mesh, voxel_grid, VoxelGrid};
use elastomono::recon::fill_enclosed;
use proptest::prelude::*;

fn grid(res: [usize; 3]) -> VoxelGrid {
    let mesh = build_mesh([1.0; 3], res).unwrap();
    voxel_grid(&mesh, res).unwrap()
}

/// Reachability by repeated sweeps over coordinates until nothing changes.
fn oracle(accepted: &[bool], res: [usize; 3]) -> Vec<bool> {
    let [nx, ny, nz] = res;
    let id = |i: usize, j: usize, k: usize| i + nx * (j + ny * k);
    let mut reached = vec![false; accepted.len()];
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let on_surface = i == 0 || j == 0 || k == 0 || i + 1 == nx || j + 1 == ny || k + 1 == nz;
                if on_surface && !accepted[id(i, j, k)] {
                    reached[id(i, j, k)] = true;
                }
            }
        }
    }
    loop {
        let mut changed = false;
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let v = id(i, j, k);
                    if reached[v] || accepted[v] {
                        continue;
                    }
                    let near = (i > 0 && reached[id(i - 1, j, k)])
                        || (i + 1 < nx && reached[id(i + 1, j, k)])
                        || (j > 0 && reached[id(i, j - 1, k)])
                        || (j + 1 < ny && reached[id(i, j + 1, k)])
                        || (k > 0 && reached[id(i, j, k - 1)])
                        || (k + 1 < nz && reached[id(i, j, k + 1)]);
                    if near {
                        reached[v] = true;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            break;
        }
    }
    accepted.iter().zip(&reached).map(|(&a, &r)| a || !r).collect()
}

fn mask_strategy() -> impl Strategy<Value = ([usize; 3], Vec<bool>)> {
    (1usize..=6, 1usize..=6, 1usize..=6).prop_flat_map(|(a, b, c)| {
        (Just([a, b, c]), prop::collection::vec(prop::bool::weighted(0.45), a * b * c))
    })
}

#[test]
fn hollow_cube_is_filled() {
    let g = grid([6, 6, 6]);
    let mut shell = vec![false; 216];
    for v in 0..216 {
        let c = g.voxel_coords(v);
        let inner = c.iter().all(|&x| (1..=4).contains(&x));
        let core = c.iter().all(|&x| (2..=3).contains(&x));
        shell[v] = inner && !core;
    }
    let filled = fill_enclosed(&shell, &g).unwrap();
    assert_eq!(filled.iter().filter(|&&b| b).count(), 64);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_sweep_oracle((res, accepted) in mask_strategy()) {
        let g = grid(res);
        let filled = fill_enclosed(&accepted, &g).unwrap();
        prop_assert_eq!(&filled, &oracle(&accepted, res));
    }

    #[test]
    fn fill_invariants((res, accepted) in mask_strategy()) {
        let g = grid(res);
        let filled = fill_enclosed(&accepted, &g).unwrap();
        prop_assert_eq!(&fill_enclosed(&filled, &g).unwrap(), &filled);
        for v in 0..accepted.len() {
            prop_assert!(filled[v] || !accepted[v]);
            if filled[v] && !accepted[v] {
                prop_assert!(!g.touches_boundary(v));
            }
        }
    }
}
