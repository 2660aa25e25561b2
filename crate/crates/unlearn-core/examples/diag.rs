//! Scratch diagnostics for tuning toy-run defaults.

use unlearn_core::losses::{LossMethod, Regularizer};
use unlearn_core::neighborset::SetKind;
use unlearn_core::toylab::*;

fn main() {
    let corpus: Vec<_> = (0..5u64)
        .map(|seed| {
            let corpus = build_toy_corpus(seed, &CorpusSizes::default()).unwrap();
            let fit =
                fit_initial(init_model(&corpus), &corpus.facts, &FitParams::default()).unwrap();
            (corpus, fit.model)
        })
        .collect();

    println!("== GA lr sweep: ordering violations ==");
    for lr in [0.05, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0] {
        for (seed, (c, m)) in corpus.iter().enumerate() {
            let spec = default_spec(LossMethod::Ga, Regularizer::None);
            let params = UnlearnParams {
                lr,
                ..UnlearnParams::for_method(LossMethod::Ga)
            };
            match unlearn(m.clone(), &spec, c, &[], &params) {
                Ok(run) => {
                    let bad: Vec<usize> = run
                        .trace
                        .steps
                        .iter()
                        .skip(1)
                        .filter(|s| {
                            s.grad_norm[&SetKind::SynSimilarNeighbor]
                                <= s.grad_norm[&SetKind::SynDifferentNeighbor]
                        })
                        .map(|s| s.step)
                        .collect();
                    let rud = rud_by_kind(m, &run.model, c);
                    println!(
                        "lr {lr} seed {seed}: steps {}, fe {:.3}, violations {} (last {:?}), rud syn {:.1} dom {:.1}",
                        run.trace.steps.len(),
                        run.trace.steps.last().unwrap().forget_efficacy,
                        bad.len(),
                        bad.last(),
                        rud[&SetKind::SynSimilarNeighbor],
                        rud[&SetKind::DomainNeighbor],
                    );
                }
                Err(e) => println!("lr {lr} seed {seed}: {e}"),
            }
        }
    }

    println!("== NPO lr sweep ==");
    for lr in [0.3, 1.0, 3.0, 6.0, 12.0] {
        let (c, m) = &corpus[0];
        let spec = default_spec(LossMethod::Npo, Regularizer::None);
        let params = UnlearnParams {
            lr,
            ..UnlearnParams::for_method(LossMethod::Npo)
        };
        match unlearn(m.clone(), &spec, c, &[], &params) {
            Ok(run) => {
                let rud = rud_by_kind(m, &run.model, c);
                println!(
                    "lr {lr}: steps {}, fe {:.3}, rud syn {:.1} dom {:.1} ent {:.1}",
                    run.trace.steps.len(),
                    run.trace.steps.last().unwrap().forget_efficacy,
                    rud[&SetKind::SynSimilarNeighbor],
                    rud[&SetKind::DomainNeighbor],
                    rud[&SetKind::EntityNeighbor],
                );
            }
            Err(e) => println!("lr {lr}: {e}"),
        }
    }

    println!("== IDK lr sweep: redirect rate ==");
    for lr in [0.01, 0.03, 0.1, 0.3, 1.0] {
        for (seed, (c, m)) in corpus.iter().enumerate() {
            let spec = default_spec(LossMethod::Idk, Regularizer::None);
            let params = UnlearnParams {
                lr,
                ..UnlearnParams::for_method(LossMethod::Idk)
            };
            match unlearn(m.clone(), &spec, c, &[], &params) {
                Ok(run) => {
                    let forget = c.facts_of(SetKind::Forget);
                    let idk = run.model.idk_token();
                    let redirected = forget
                        .iter()
                        .filter(|f| {
                            let p = run.model.probs(f.template_id, f.entity_id);
                            p.iter()
                                .enumerate()
                                .max_by(|(_, a), (_, b)| a.partial_cmp(b).unwrap())
                                .map(|(i, _)| i)
                                == Some(idk)
                        })
                        .count();
                    println!(
                        "lr {lr} seed {seed}: steps {}, fe {:.3}, redirected {redirected}/10",
                        run.trace.steps.len(),
                        run.trace.steps.last().unwrap().forget_efficacy
                    );
                }
                Err(e) => println!("lr {lr} seed {seed}: {e}"),
            }
        }
    }

    println!("== DPO lr sweep ==");
    for lr in [0.08, 0.3, 1.0, 3.0] {
        let (c, m) = &corpus[0];
        let spec = default_spec(LossMethod::Dpo, Regularizer::None);
        let params = UnlearnParams {
            lr,
            ..UnlearnParams::for_method(LossMethod::Dpo)
        };
        match unlearn(m.clone(), &spec, c, &[], &params) {
            Ok(run) => {
                let rud = rud_by_kind(m, &run.model, c);
                println!(
                    "lr {lr}: steps {}, fe {:.3}, rud syn {:.1} dom {:.1}",
                    run.trace.steps.len(),
                    run.trace.steps.last().unwrap().forget_efficacy,
                    rud[&SetKind::SynSimilarNeighbor],
                    rud[&SetKind::DomainNeighbor],
                );
            }
            Err(e) => println!("lr {lr}: {e}"),
        }
    }
}
