//! Which block has the noisiest gradient? Small-batch vs nested large-batch
//! estimate on the MLP at initialization.

use scale_opt::diagnostics::{estimate_layer_variance, VarianceProtocol};
use scale_opt::problems::{MlpConfig, MlpModel, Problem};
use scale_opt::rng::streams;
use scale_opt::Rng;

fn main() -> scale_opt::Result<()> {
    let model = MlpModel::new(MlpConfig::default())?;
    let protocol = VarianceProtocol::default();
    for seed in 0..3 {
        let params = model.init_params(&mut Rng::with_stream(seed, streams::INIT));
        let est = estimate_layer_variance(
            &model,
            &params,
            &protocol,
            &mut Rng::with_stream(seed, streams::SAMPLING),
            100,
        )?;
        println!(
            "seed {seed} (batch {} vs {}):",
            protocol.small_batch, protocol.large_batch
        );
        for i in est.ordering() {
            println!(
                "  {:<14} {:.4} ± {:.4}",
                est.blocks[i], est.mean[i], est.std_err[i]
            );
        }
    }
    Ok(())
}
