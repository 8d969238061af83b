//! The five normalizations on one small gradient, with the norm each one
//! is steepest for and a Monte-Carlo check that `-D` really is the minimizer.

use scale_opt::normalize::{lmo_sample, primal_norm};
use scale_opt::{dual_norm, normalize, Matrix, NormKind, NsConfig, Rng};

fn main() -> scale_opt::Result<()> {
    let mut rng = Rng::new(7);
    let g = Matrix::random_normal(3, 4, 1.0, &mut rng);
    let ns = NsConfig::default();
    println!("G =\n{}", show(&g));

    for kind in NormKind::ALL {
        let d = normalize(kind, &g, &ns)?;
        println!("{kind}:\n{}", show(&d));
        println!("  primal norm of D   {:.6}", primal_norm(kind, &d)?);
        println!("  <G, D>             {:.6}", g.inner(&d)?);
        println!("  dual norm of G     {:.6}", dual_norm(kind, &g)?);
        if kind.is_exact() {
            let r = lmo_sample(kind, &g, 2000, &ns, &mut rng)?;
            println!(
                "  LMO: claimed {:.6}, best of {} samples {:.6} -> {}",
                r.claimed,
                r.trials - r.infeasible,
                r.best_sampled,
                if r.passed() { "optimal" } else { "BEATEN" }
            );
        }
    }
    Ok(())
}

fn show(m: &Matrix) -> String {
    (0..m.rows())
        .map(|i| {
            let cells: Vec<String> = m.row(i).iter().map(|x| format!("{x:8.4}")).collect();
            format!("  [{}]", cells.join(" "))
        })
        .collect::<Vec<_>>()
        .join("\n")
}
