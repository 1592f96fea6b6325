//! Recurrent aggregation step by step: the queries, the attention they put
//! on each particle, and the three readouts.
//!
//! `cargo run --release --example recurrent`

use deepset::aggregation::SimpleAggregation;
use deepset::autodiff::{Graph, Rng, Shape};
use deepset::params::ParamSet;
use deepset::recurrent::{attention_logits, normalize, QueryAggregation, Readout, RecurrentAggregation};

fn main() -> deepset::Result<()> {
    let mut rng = Rng::new(3);
    let width = 4;
    let x = rng.normal(&Shape::new(vec![6, width])?, 0.0, 1.0)?;

    let mut params = ParamSet::new();
    let agg = RecurrentAggregation::new(
        &mut params,
        "agg",
        width,
        3,
        SimpleAggregation::Sum,
        Readout::Reverse,
        &mut rng,
    )?;
    // a non-zero starting query makes the first step non-uniform
    for v in params.get_mut(agg.query()).data_mut() {
        *v = rng.standard_normal();
    }

    let g = Graph::new();
    let p = params.bind_frozen(&g);
    let e = g.constant(x.clone());
    let trace = agg.trace(&g, &p, e)?;
    for (t, q) in trace.queries.iter().enumerate() {
        let a = normalize(&g, attention_logits(&g, e, *q)?)?;
        let weights: Vec<String> = g.value(a).data().iter().map(|w| format!("{w:.3}")).collect();
        println!("step {}: attention [{}]", t + 1, weights.join(", "));
    }
    println!("reverse readout: {:?}", g.value(trace.output).data());

    for readout in [Readout::First, Readout::Last] {
        let mut ps = ParamSet::new();
        let a = RecurrentAggregation::new(
            &mut ps,
            "agg",
            width,
            3,
            SimpleAggregation::Sum,
            readout,
            &mut Rng::new(1),
        )?;
        let g = Graph::new();
        let out = a.forward(&g, &ps.bind_frozen(&g), g.constant(x.clone()))?;
        println!("{readout:?} readout: {:?}", g.value(out).data());
    }

    // one step with a zero query is plain attention pooling with uniform weights
    let mut ps = ParamSet::new();
    let q = QueryAggregation::new(&mut ps, "q", width, SimpleAggregation::Sum)?;
    let g = Graph::new();
    let out = q.forward(&g, &ps.bind_frozen(&g), g.constant(x))?;
    println!(
        "query aggregation at init (the column means): {:?}",
        g.value(out).data()
    );
    Ok(())
}
