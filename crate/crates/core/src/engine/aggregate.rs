use crate::learner::ModelParams;
use crate::radio::ClientId;

use super::EngineError;

/// A model delivered by one client together with its sample count.
#[derive(Debug, Clone, Copy)]
pub struct LocalUpdate<'a> {
    pub client: ClientId,
    pub params: &'a ModelParams,
    pub num_samples: usize,
}

/// `|D_i| / Σ|D_i|` for each update, in the given order.
pub fn aggregation_weights(updates: &[LocalUpdate<'_>]) -> Vec<f64> {
    let total: usize = updates.iter().map(|u| u.num_samples).sum();
    updates
        .iter()
        .map(|u| u.num_samples as f64 / total as f64)
        .collect()
}

/// Sample-weighted average of the delivered models.
///
/// Updates are folded in ascending client-id order whatever order they are
/// passed in, so the result does not depend on arrival order.
pub fn aggregate(updates: &[LocalUpdate<'_>]) -> Result<ModelParams, EngineError> {
    if updates.is_empty() {
        return Err(EngineError::EmptyAggregation);
    }
    let mut sorted: Vec<LocalUpdate<'_>> = updates.to_vec();
    sorted.sort_by_key(|u| u.client);
    if let Some(w) = sorted.windows(2).find(|w| w[0].client == w[1].client) {
        return Err(EngineError::InvalidConfig(format!(
            "client {} delivered two models",
            w[0].client
        )));
    }
    if let Some(u) = sorted.iter().find(|u| u.num_samples == 0) {
        return Err(EngineError::InvalidConfig(format!(
            "client {} reported zero samples",
            u.client
        )));
    }
    let weights = aggregation_weights(&sorted);
    let mut out = sorted[0].params.zeros_like();
    for (update, w) in sorted.iter().zip(weights) {
        if update.params.len() != out.len() {
            return Err(EngineError::InvalidConfig(format!(
                "client {} delivered {} parameters, expected {}",
                update.client,
                update.params.len(),
                out.len()
            )));
        }
        out.axpy(w, update.params);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learner::ModelSpec;

    fn params(values: &[f64]) -> ModelParams {
        let spec = ModelSpec::softmax_regression(1, 2);
        ModelParams::new(values.to_vec(), std::sync::Arc::new(spec.layout())).unwrap()
    }

    #[test]
    fn equal_weights_give_mean() {
        let a = params(&[1.0, 2.0, 3.0, 4.0]);
        let b = params(&[3.0, 2.0, -1.0, 0.5]);
        let out = aggregate(&[
            LocalUpdate {
                client: ClientId(1),
                params: &a,
                num_samples: 10,
            },
            LocalUpdate {
                client: ClientId(0),
                params: &b,
                num_samples: 10,
            },
        ])
        .unwrap();
        assert_eq!(out.values(), &[2.0, 2.0, 1.0, 2.25]);
    }

    #[test]
    fn single_update_is_identity() {
        let a = params(&[0.1, -0.3, 1e-17, 7.0]);
        let out = aggregate(&[LocalUpdate {
            client: ClientId(5),
            params: &a,
            num_samples: 3,
        }])
        .unwrap();
        assert_eq!(out, a);
    }

    #[test]
    fn rejects_empty_and_duplicates() {
        assert!(matches!(aggregate(&[]), Err(EngineError::EmptyAggregation)));
        let a = params(&[0.0; 4]);
        let dup = [
            LocalUpdate {
                client: ClientId(1),
                params: &a,
                num_samples: 1,
            },
            LocalUpdate {
                client: ClientId(1),
                params: &a,
                num_samples: 1,
            },
        ];
        assert!(aggregate(&dup).is_err());
    }
}
