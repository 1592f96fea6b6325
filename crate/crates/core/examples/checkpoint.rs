//! Saving parameters to the binary blob and loading them back, including
//! the error for a blob from another architecture.
//!
//! `cargo run --release --example checkpoint`

use deepset::autodiff::{Rng, Tensor};
use deepset::model::{DeepSetModel, ModelConfig, OutputHead};

fn main() -> deepset::Result<()> {
    let config = ModelConfig::standard(16, "r-mean".parse()?, "q-max".parse()?, OutputHead::Beta);
    let model = DeepSetModel::new(config, &mut Rng::new(2))?;
    let bytes = model.to_bytes();
    println!(
        "{} parameters in {} tensors, {} bytes",
        model.params().numel(),
        model.params().len(),
        bytes.len()
    );

    let back = DeepSetModel::from_bytes(&bytes)?;
    let x = Tensor::from_rows(&[vec![0.1, 0.2], vec![-1.0, 0.4], vec![0.7, -0.3]])?;
    assert_eq!(model.predict(&x)?, back.predict(&x)?);
    println!("reloaded model predicts identically: {:?}", back.predict(&x)?.data());

    let other = DeepSetModel::new(
        ModelConfig::standard(16, "mean".parse()?, "mean".parse()?, OutputHead::Beta),
        &mut Rng::new(2),
    )?;
    let mut target = other.clone();
    match target.load_parameters(&bytes) {
        Err(e) => println!("loading into a different architecture: {e}"),
        Ok(()) => unreachable!(),
    }
    Ok(())
}
