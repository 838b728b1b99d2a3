//! Server side of the federation: round loop, head averaging, grouping.
//!
//! Everything here talks to clients through head snapshots, head
//! installation, local training calls and scalar validation scores.

use rayon::prelude::*;
use serde::Serialize;

use super::{ClientState, FedError, FederationConfig, RoundReport, Stage};
use crate::kg::SplitPart;
use crate::nn::HeadModule;

/// Unweighted elementwise mean of shape-identical heads.
///
/// Each coordinate is averaged over its values in sorted order with a
/// running mean, so the result does not depend on input order and equals
/// the input when all heads agree.
pub fn average_heads(heads: &[HeadModule]) -> Result<HeadModule, FedError> {
    let first = heads.first().ok_or(FedError::EmptyInput)?;
    if let Some(i) = heads.iter().position(|h| !h.same_shape(first)) {
        return Err(FedError::ShapeMismatch(format!(
            "head {i} differs in shape from head 0"
        )));
    }
    let mut out = first.clone();
    let views: Vec<Vec<&[f64]>> = heads.iter().map(HeadModule::tensors).collect();
    let mut column = Vec::with_capacity(heads.len());
    for (t, target) in out.tensors_mut().into_iter().enumerate() {
        for (c, slot) in target.iter_mut().enumerate() {
            column.clear();
            column.extend(views.iter().map(|v| v[t][c]));
            column.sort_by(f64::total_cmp);
            let mut mean = 0.0;
            for (k, &x) in column.iter().enumerate() {
                mean += (x - mean) / (k + 1) as f64;
            }
            *slot = mean;
        }
    }
    Ok(out)
}

/// `m[i][j]`: validation ROC-AUC of client `i` scoring its own pairs with
/// client `j`'s head.
pub fn cross_evaluate(clients: &[ClientState]) -> Result<Vec<Vec<f64>>, FedError> {
    let heads: Vec<HeadModule> = clients.iter().map(ClientState::head_snapshot).collect();
    clients
        .iter()
        .map(|c| heads.iter().map(|h| c.validation_auc_with(h)).collect())
        .collect()
}

/// Connected components of the mutual-compatibility graph: `i` and `j`
/// are linked iff `m[i][j] >= m[i][i] - delta` and `m[j][i] >= m[j][j] - delta`.
/// Groups are listed by smallest member, members ascending.
pub fn form_groups(matrix: &[Vec<f64>], delta: f64) -> Vec<Vec<usize>> {
    let n = matrix.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in i + 1..n {
            let ok = matrix[i][j] >= matrix[i][i] - delta && matrix[j][i] >= matrix[j][j] - delta;
            if ok {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let root = find(&mut parent, i);
        if slot[root] == usize::MAX {
            slot[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[root]].push(i);
    }
    groups
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupingResult {
    pub cross_eval: Vec<Vec<f64>>,
    pub groups: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederationOutcome {
    pub reports: Vec<RoundReport>,
    pub grouping: Option<GroupingResult>,
}

fn on_clients<T, F>(clients: &mut [ClientState], parallel: bool, f: F) -> Result<Vec<T>, FedError>
where
    T: Send,
    F: Fn(&mut ClientState) -> Result<T, FedError> + Sync + Send,
{
    if parallel {
        clients.par_iter_mut().map(f).collect()
    } else {
        clients.iter_mut().map(f).collect()
    }
}

fn exchange(clients: &mut [ClientState], groups: &[Vec<usize>]) -> Result<(), FedError> {
    for group in groups {
        let heads: Vec<HeadModule> = group.iter().map(|&i| clients[i].head_snapshot()).collect();
        let averaged = average_heads(&heads)?;
        for &i in group {
            clients[i].install_head(averaged.clone())?;
        }
    }
    Ok(())
}

fn report_all(
    clients: &[ClientState],
    losses: &[f64],
    round: usize,
    stage: Stage,
    config: &FederationConfig,
) -> Result<Vec<RoundReport>, FedError> {
    clients
        .iter()
        .zip(losses)
        .map(|(c, &loss)| {
            let metrics = c.evaluate(SplitPart::Valid)?;
            Ok(RoundReport {
                round,
                stage,
                client: c.id().to_string(),
                variant: config.variant,
                train_loss: loss,
                val_auc: metrics.into_iter().map(|(r, m)| (r, m.roc_auc)).collect(),
            })
        })
        .collect()
}

fn last_loss(trace: &[f64]) -> f64 {
    trace.last().copied().unwrap_or(f64::NAN)
}

/// Runs one regime over `clients`, leaving them in their final state.
///
/// Each round every client trains `local_epochs` epochs, then the heads of
/// each group are replaced by the group mean: one group of everyone for the
/// FLavg regimes, groups from [`form_groups`] for the AdapFL regimes, no
/// exchange for LocalM. AdapFL regimes first train every client locally for
/// `rounds * local_epochs` epochs and group once from the cross-evaluation
/// of those models. FT regimes fine-tune the last head layer after the last
/// round.
pub fn run_federation(
    clients: &mut [ClientState],
    config: &FederationConfig,
) -> Result<FederationOutcome, FedError> {
    config.validate()?;
    let first = clients.first().ok_or(FedError::EmptyInput)?.head_snapshot();
    if clients.iter().any(|c| !c.head_snapshot().same_shape(&first)) {
        return Err(FedError::ShapeMismatch("client heads differ in shape".into()));
    }
    let variant = config.variant;
    let mut reports = Vec::new();
    let mut grouping = None;

    let groups: Vec<Vec<usize>> = if variant.adaptive() {
        let budget = config.rounds * config.local_epochs;
        let losses = on_clients(clients, config.parallel, |c| Ok(last_loss(&c.local_train(budget)?)))?;
        reports.extend(report_all(clients, &losses, 0, Stage::Pretrain, config)?);
        let cross_eval = cross_evaluate(clients)?;
        let groups = form_groups(&cross_eval, config.delta);
        exchange(clients, &groups)?;
        grouping = Some(GroupingResult {
            cross_eval,
            groups: groups.clone(),
        });
        groups
    } else if variant.federated() {
        vec![(0..clients.len()).collect()]
    } else {
        Vec::new()
    };

    for round in 1..=config.rounds {
        let epochs = config.local_epochs;
        let losses = on_clients(clients, config.parallel, |c| Ok(last_loss(&c.local_train(epochs)?)))?;
        exchange(clients, &groups)?;
        reports.extend(report_all(clients, &losses, round, Stage::Round, config)?);
    }

    if variant.fine_tuned() {
        let epochs = config.finetune_epochs;
        let losses = on_clients(clients, config.parallel, |c| {
            Ok(last_loss(&c.fine_tune_last_layer(epochs)?))
        })?;
        reports.extend(report_all(clients, &losses, config.rounds, Stage::FineTune, config)?);
    }

    Ok(FederationOutcome { reports, grouping })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseLayer, Matrix};
    use crate::seed;

    fn head(seed: u64) -> HeadModule {
        HeadModule::init(3, [3, 3, 3], Activation::Relu, &mut seed::rng(seed))
    }

    #[test]
    fn mean_of_one_and_identical() {
        let h = head(1);
        assert_eq!(average_heads(&[h.clone()]).unwrap(), h);
        assert_eq!(average_heads(&vec![h.clone(); 7]).unwrap(), h);
        assert_eq!(average_heads(&[]), Err(FedError::EmptyInput));
    }

    #[test]
    fn arithmetic_mean() {
        let with = |v: f64| {
            let l = || DenseLayer::new(Matrix::new(1, 1, vec![v]).unwrap(), vec![v]).unwrap();
            HeadModule::new([l(), l(), l()], Activation::Relu).unwrap()
        };
        let avg = average_heads(&[with(1.0), with(3.0)]).unwrap();
        assert!(avg.tensors().iter().all(|t| t == &[2.0]));
    }

    #[test]
    fn permutation_invariant() {
        let heads: Vec<HeadModule> = (0..5).map(head).collect();
        let a = average_heads(&heads).unwrap();
        for perm in [[4, 3, 2, 1, 0], [2, 0, 4, 1, 3], [1, 2, 3, 4, 0]] {
            let shuffled: Vec<HeadModule> = perm.iter().map(|&i| heads[i].clone()).collect();
            assert_eq!(average_heads(&shuffled).unwrap(), a);
        }
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let other = HeadModule::init(4, [4, 4, 4], Activation::Relu, &mut seed::rng(0));
        assert!(matches!(
            average_heads(&[head(0), other]),
            Err(FedError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn grouping_examples() {
        let m = vec![
            vec![0.9, 0.2, 0.5],
            vec![0.1, 0.8, 0.3],
            vec![0.4, 0.6, 0.7],
        ];
        assert_eq!(form_groups(&m, 1.0), vec![vec![0, 1, 2]]);
        let m = vec![vec![0.9, 0.0, 0.0], vec![0.0, 0.9, 0.0], vec![0.0, 0.0, 0.9]];
        assert_eq!(form_groups(&m, 0.05), vec![vec![0], vec![1], vec![2]]);
        // Two mutual pairs {0, 2} and {1, 3}.
        let m = vec![
            vec![0.90, 0.50, 0.89, 0.40],
            vec![0.50, 0.80, 0.40, 0.79],
            vec![0.88, 0.45, 0.88, 0.30],
            vec![0.40, 0.80, 0.35, 0.81],
        ];
        assert_eq!(form_groups(&m, 0.02), vec![vec![0, 2], vec![1, 3]]);
    }

    #[test]
    fn grouping_requires_mutual_compatibility() {
        // 0 likes 1's head, 1 does not like 0's.
        let m = vec![vec![0.8, 0.85], vec![0.5, 0.9]];
        assert_eq!(form_groups(&m, 0.02), vec![vec![0], vec![1]]);
    }

    #[test]
    fn grouping_is_transitive_through_components() {
        let m = vec![
            vec![0.9, 0.9, 0.1],
            vec![0.9, 0.9, 0.9],
            vec![0.1, 0.9, 0.9],
        ];
        assert_eq!(form_groups(&m, 0.0), vec![vec![0, 1, 2]]);
    }
}
