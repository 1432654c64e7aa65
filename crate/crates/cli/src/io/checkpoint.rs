//! Checkpoints: one JSON document per trained model with a model-type tag,
//! shape manifest, flat parameter arrays, optimizer echo, and seed. Params
//! are stored with 9 significant digits; trained models are already
//! quantized onto that grid, so a reloaded checkpoint reproduces bit-
//! identical predictions.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use prefbench_core::data::{Embedding, UserId};
use prefbench_core::engine::{OptimConfig, OptimMethod, ParamSet, Tensor};
use prefbench_core::models::{
    ConditionalModel, GpoConfig, GpoModel, IndividualModel, KnnModel, PreferenceModel, PrmModel,
    StoredExample, VanillaModel, VplConfig, VplModel,
};

use crate::error::CmdError;

use super::{json_num, json_num_array, json_str, write_atomic};

fn optim_json(cfg: &OptimConfig) -> String {
    let (method, beta1, beta2, eps) = match cfg.method {
        OptimMethod::Sgd => ("sgd", 0.0, 0.0, 0.0),
        OptimMethod::Adam { beta1, beta2, eps } => ("adam", beta1, beta2, eps),
    };
    format!(
        "{{\"learning_rate\":{},\"batch_size\":{},\"epochs\":{},\"method\":{},\"beta1\":{},\"beta2\":{},\"eps\":{},\"seed\":{},\"patience\":{}}}",
        json_num(cfg.learning_rate),
        cfg.batch_size,
        cfg.epochs,
        json_str(method),
        json_num(beta1),
        json_num(beta2),
        json_num(eps),
        cfg.seed,
        cfg.patience.map_or("null".to_string(), |p| p.to_string()),
    )
}

fn parse_optim(v: &serde_json::Value) -> Result<OptimConfig, CmdError> {
    let get_f = |k: &str| super::value_f64(v, k, 0);
    let get_u = |k: &str| super::value_u64(v, k, 0);
    let method = match super::value_str(v, "method", 0)? {
        "sgd" => OptimMethod::Sgd,
        "adam" => OptimMethod::Adam {
            beta1: get_f("beta1")?,
            beta2: get_f("beta2")?,
            eps: get_f("eps")?,
        },
        other => return Err(CmdError::data(format!("unknown optimizer {other:?}"))),
    };
    Ok(OptimConfig {
        learning_rate: get_f("learning_rate")?,
        batch_size: get_u("batch_size")? as usize,
        epochs: get_u("epochs")? as usize,
        method,
        seed: get_u("seed")?,
        patience: match v.get("patience") {
            Some(serde_json::Value::Null) | None => None,
            Some(p) => Some(p.as_u64().ok_or_else(|| {
                CmdError::data("patience must be an integer or null".to_string())
            })? as usize),
        },
    })
}

fn params_json(params: &ParamSet) -> String {
    let parts: Vec<String> = params
        .iter()
        .map(|(name, t)| {
            format!(
                "{}:{{\"rows\":{},\"cols\":{},\"data\":{}}}",
                json_str(name),
                t.rows,
                t.cols,
                json_num_array(&t.data),
            )
        })
        .collect();
    format!("{{{}}}", parts.join(","))
}

fn parse_params(v: &serde_json::Value) -> Result<ParamSet, CmdError> {
    let obj = v
        .as_object()
        .ok_or_else(|| CmdError::data("params must be an object".to_string()))?;
    let mut params = ParamSet::new();
    for (name, tv) in obj {
        let rows = super::value_u64(tv, "rows", 0)? as usize;
        let cols = super::value_u64(tv, "cols", 0)? as usize;
        let data = super::value_vec_f64(tv, "data", 0)?;
        if data.len() != rows * cols {
            return Err(CmdError::data(format!(
                "tensor {name:?}: shape {rows}x{cols} does not match {} values",
                data.len()
            )));
        }
        params.insert(name, Tensor { rows, cols, data });
    }
    Ok(params)
}

fn user_vec_map_json(map: &BTreeMap<UserId, Vec<f64>>) -> String {
    let parts: Vec<String> = map
        .iter()
        .map(|(u, w)| format!("{}:{}", json_str(u.as_str()), json_num_array(w)))
        .collect();
    format!("{{{}}}", parts.join(","))
}

fn parse_user_vec_map(v: &serde_json::Value) -> Result<BTreeMap<UserId, Vec<f64>>, CmdError> {
    let obj = v
        .as_object()
        .ok_or_else(|| CmdError::data("expected a user map".to_string()))?;
    obj.iter()
        .map(|(u, arr)| {
            let values: Result<Vec<f64>, CmdError> = arr
                .as_array()
                .ok_or_else(|| CmdError::data(format!("user {u:?}: expected an array")))?
                .iter()
                .map(|x| {
                    x.as_f64()
                        .ok_or_else(|| CmdError::data(format!("user {u:?}: non-numeric entry")))
                })
                .collect();
            Ok((UserId(u.clone()), values?))
        })
        .collect()
}

fn payload_json(model: &PreferenceModel) -> String {
    match model {
        PreferenceModel::Vanilla(m) => {
            format!("{{\"weights\":{}}}", json_num_array(&m.weights))
        }
        PreferenceModel::Individual(m) => {
            format!("{{\"per_user\":{}}}", user_vec_map_json(&m.per_user))
        }
        PreferenceModel::Conditional(m) => {
            let bias: Vec<String> = m
                .bias
                .iter()
                .map(|(u, b)| format!("{}:{}", json_str(u.as_str()), json_num(*b)))
                .collect();
            format!(
                "{{\"weights\":{},\"bias\":{{{}}}}}",
                json_num_array(&m.weights),
                bias.join(",")
            )
        }
        PreferenceModel::Prm(m) => {
            let idx: Vec<String> = m
                .user_index
                .iter()
                .map(|(u, i)| format!("{}:{}", json_str(u.as_str()), i))
                .collect();
            format!(
                "{{\"alpha\":{},\"user_index\":{{{}}},\"params\":{}}}",
                json_num(m.alpha),
                idx.join(","),
                params_json(&m.params),
            )
        }
        PreferenceModel::Vpl(m) => format!(
            "{{\"latent_dim\":{},\"beta\":{},\"context_size\":{},\"params\":{},\"user_latents\":{}}}",
            m.config.latent_dim,
            json_num(m.config.beta),
            m.config.context_size,
            params_json(&m.params),
            user_vec_map_json(&m.user_latents),
        ),
        PreferenceModel::GpoLite(m) => {
            let store: Vec<String> = m
                .context_store
                .iter()
                .map(|(u, pairs)| {
                    let items: Vec<String> = pairs
                        .iter()
                        .map(|(gap, label)| {
                            format!("{{\"gap\":{},\"label\":{label}}}", json_num_array(gap))
                        })
                        .collect();
                    format!("{}:[{}]", json_str(u.as_str()), items.join(","))
                })
                .collect();
            format!(
                "{{\"context_n\":{},\"episodes_per_epoch\":{},\"params\":{},\"context_store\":{{{}}}}}",
                m.config.context_n,
                m.config.episodes_per_epoch,
                params_json(&m.params),
                store.join(","),
            )
        }
        PreferenceModel::Knn(m) => {
            let store: Vec<String> = m
                .store
                .iter()
                .map(|(u, examples)| {
                    let items: Vec<String> = examples
                        .iter()
                        .map(|ex| {
                            format!(
                                "{{\"x\":{},\"y1\":{},\"y2\":{},\"label\":{}}}",
                                json_num_array(ex.x.values()),
                                json_num_array(ex.y1.values()),
                                json_num_array(ex.y2.values()),
                                ex.label,
                            )
                        })
                        .collect();
                    format!("{}:[{}]", json_str(u.as_str()), items.join(","))
                })
                .collect();
            format!("{{\"k\":{},\"store\":{{{}}}}}", m.k, store.join(","))
        }
    }
}

fn model_optim(model: &PreferenceModel) -> OptimConfig {
    match model {
        PreferenceModel::Vanilla(m) => m.optim.clone(),
        PreferenceModel::Individual(m) => m.optim.clone(),
        PreferenceModel::Conditional(m) => m.optim.clone(),
        PreferenceModel::Prm(m) => m.optim.clone(),
        PreferenceModel::Vpl(m) => m.optim.clone(),
        PreferenceModel::GpoLite(m) => m.optim.clone(),
        // the store has no optimizer; echo defaults
        PreferenceModel::Knn(_) => OptimConfig::default(),
    }
}

pub fn save_checkpoint(model: &PreferenceModel, path: &Path) -> Result<(), CmdError> {
    let optim = model_optim(model);
    let doc = format!(
        "{{\"format_version\":1,\"kind\":\"checkpoint\",\"model\":{},\"seed\":{},\"optim\":{},\"payload\":{}}}\n",
        json_str(model.kind()),
        optim.seed,
        optim_json(&optim),
        payload_json(model),
    );
    write_atomic(path, doc.as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<PreferenceModel, CmdError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CmdError::data(format!("{}: {e}", path.display())))?;
    let v: serde_json::Value = serde_json::from_str(text.trim())
        .map_err(|e| CmdError::data(format!("{}: malformed checkpoint: {e}", path.display())))?;
    let kind = super::value_str(&v, "model", 0)?;
    let optim = parse_optim(
        v.get("optim")
            .ok_or_else(|| CmdError::data("missing optim echo".to_string()))?,
    )?;
    let payload = v
        .get("payload")
        .ok_or_else(|| CmdError::data("missing payload".to_string()))?;

    let model = match kind {
        "vanilla" => PreferenceModel::Vanilla(VanillaModel {
            weights: super::value_vec_f64(payload, "weights", 0)?,
            optim,
        }),
        "individual" => PreferenceModel::Individual(IndividualModel {
            per_user: parse_user_vec_map(
                payload
                    .get("per_user")
                    .ok_or_else(|| CmdError::data("missing per_user".to_string()))?,
            )?,
            optim,
        }),
        "conditional" => {
            let bias_obj = payload
                .get("bias")
                .and_then(serde_json::Value::as_object)
                .ok_or_else(|| CmdError::data("missing bias map".to_string()))?;
            let bias: Result<BTreeMap<UserId, f64>, CmdError> = bias_obj
                .iter()
                .map(|(u, b)| {
                    Ok((
                        UserId(u.clone()),
                        b.as_f64()
                            .ok_or_else(|| CmdError::data("non-numeric bias".to_string()))?,
                    ))
                })
                .collect();
            PreferenceModel::Conditional(ConditionalModel {
                weights: super::value_vec_f64(payload, "weights", 0)?,
                bias: bias?,
                optim,
            })
        }
        "prm" => {
            let idx_obj = payload
                .get("user_index")
                .and_then(serde_json::Value::as_object)
                .ok_or_else(|| CmdError::data("missing user_index".to_string()))?;
            let user_index: Result<BTreeMap<UserId, usize>, CmdError> = idx_obj
                .iter()
                .map(|(u, i)| {
                    Ok((
                        UserId(u.clone()),
                        i.as_u64()
                            .ok_or_else(|| CmdError::data("non-integer user index".to_string()))?
                            as usize,
                    ))
                })
                .collect();
            PreferenceModel::Prm(PrmModel {
                params: parse_params(
                    payload
                        .get("params")
                        .ok_or_else(|| CmdError::data("missing params".to_string()))?,
                )?,
                user_index: user_index?,
                alpha: super::value_f64(payload, "alpha", 0)?,
                optim,
            })
        }
        "vpl" => PreferenceModel::Vpl(VplModel {
            params: parse_params(
                payload
                    .get("params")
                    .ok_or_else(|| CmdError::data("missing params".to_string()))?,
            )?,
            config: VplConfig {
                latent_dim: super::value_u64(payload, "latent_dim", 0)? as usize,
                beta: super::value_f64(payload, "beta", 0)?,
                context_size: super::value_u64(payload, "context_size", 0)? as usize,
            },
            optim,
            user_latents: parse_user_vec_map(
                payload
                    .get("user_latents")
                    .ok_or_else(|| CmdError::data("missing user_latents".to_string()))?,
            )?,
        }),
        "gpo" => {
            let store_obj = payload
                .get("context_store")
                .and_then(serde_json::Value::as_object)
                .ok_or_else(|| CmdError::data("missing context_store".to_string()))?;
            let mut context_store = BTreeMap::new();
            for (u, items) in store_obj {
                let arr = items
                    .as_array()
                    .ok_or_else(|| CmdError::data("context store entry is not an array".to_string()))?;
                let pairs: Result<Vec<(Vec<f64>, u8)>, CmdError> = arr
                    .iter()
                    .map(|item| {
                        Ok((
                            super::value_vec_f64(item, "gap", 0)?,
                            super::value_u64(item, "label", 0)? as u8,
                        ))
                    })
                    .collect();
                context_store.insert(UserId(u.clone()), pairs?);
            }
            PreferenceModel::GpoLite(GpoModel {
                params: parse_params(
                    payload
                        .get("params")
                        .ok_or_else(|| CmdError::data("missing params".to_string()))?,
                )?,
                config: GpoConfig {
                    context_n: super::value_u64(payload, "context_n", 0)? as usize,
                    episodes_per_epoch: super::value_u64(payload, "episodes_per_epoch", 0)? as usize,
                },
                optim,
                context_store,
            })
        }
        "knn" => {
            let store_obj = payload
                .get("store")
                .and_then(serde_json::Value::as_object)
                .ok_or_else(|| CmdError::data("missing store".to_string()))?;
            let mut store = BTreeMap::new();
            for (u, items) in store_obj {
                let arr = items
                    .as_array()
                    .ok_or_else(|| CmdError::data("store entry is not an array".to_string()))?;
                let examples: Result<Vec<StoredExample>, CmdError> = arr
                    .iter()
                    .map(|item| {
                        Ok(StoredExample {
                            x: Embedding::quantized(super::value_vec_f64(item, "x", 0)?),
                            y1: Embedding::quantized(super::value_vec_f64(item, "y1", 0)?),
                            y2: Embedding::quantized(super::value_vec_f64(item, "y2", 0)?),
                            label: super::value_u64(item, "label", 0)? as u8,
                        })
                    })
                    .collect();
                store.insert(UserId(u.clone()), examples?);
            }
            PreferenceModel::Knn(KnnModel {
                k: super::value_u64(payload, "k", 0)? as usize,
                store,
            })
        }
        other => {
            return Err(CmdError::data(format!("unknown model tag {other:?}")));
        }
    };
    Ok(model)
}
