//! Analytic per-layer cost model, its operation counts, and reconciliation with the traced circuit.

use he_core::HeParams;
use rhe_engine::{chunk_layout, pad_dim, trace_circuit, HeadSpec, OpCounts, OpKind, Role};
use serde::{Deserialize, Serialize};

use crate::error::{PlannerError, Result};

pub const PROFILE_SCHEMA: &str = "rhe.cost-profile/1";
pub const BREAKDOWN_SCHEMA: &str = "rhe.cost-breakdown/1";

/// The five timed primitives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Primitive {
    #[serde(rename = "t_PM")]
    PlainMul,
    #[serde(rename = "t_PA")]
    PlainAdd,
    #[serde(rename = "t_EM")]
    EncMul,
    #[serde(rename = "t_EA")]
    EncAdd,
    #[serde(rename = "t_R")]
    Rotation,
}

impl Primitive {
    pub const ALL: [Primitive; 5] =
        [Primitive::PlainMul, Primitive::PlainAdd, Primitive::EncMul, Primitive::EncAdd, Primitive::Rotation];

    pub fn symbol(self) -> &'static str {
        match self {
            Primitive::PlainMul => "t_PM",
            Primitive::PlainAdd => "t_PA",
            Primitive::EncMul => "t_EM",
            Primitive::EncAdd => "t_EA",
            Primitive::Rotation => "t_R",
        }
    }
}

fn profile_schema() -> String {
    PROFILE_SCHEMA.to_string()
}

/// Seconds per primitive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostProfile {
    #[serde(default = "profile_schema")]
    pub schema: String,
    #[serde(rename = "t_PM")]
    pub t_pm: f64,
    #[serde(rename = "t_PA")]
    pub t_pa: f64,
    #[serde(rename = "t_EM")]
    pub t_em: f64,
    #[serde(rename = "t_EA")]
    pub t_ea: f64,
    #[serde(rename = "t_R")]
    pub t_r: f64,
    #[serde(default)]
    pub machine: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<HeParams>,
}

impl CostProfile {
    /// Every primitive costs `t`.
    pub fn uniform(t: f64) -> Self {
        CostProfile {
            schema: profile_schema(),
            t_pm: t,
            t_pa: t,
            t_em: t,
            t_ea: t,
            t_r: t,
            machine: String::new(),
            params: None,
        }
    }

    pub fn get(&self, p: Primitive) -> f64 {
        match p {
            Primitive::PlainMul => self.t_pm,
            Primitive::PlainAdd => self.t_pa,
            Primitive::EncMul => self.t_em,
            Primitive::EncAdd => self.t_ea,
            Primitive::Rotation => self.t_r,
        }
    }

    pub fn set(&mut self, p: Primitive, seconds: f64) {
        match p {
            Primitive::PlainMul => self.t_pm = seconds,
            Primitive::PlainAdd => self.t_pa = seconds,
            Primitive::EncMul => self.t_em = seconds,
            Primitive::EncAdd => self.t_ea = seconds,
            Primitive::Rotation => self.t_r = seconds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != PROFILE_SCHEMA {
            return Err(PlannerError::Format(format!("unsupported profile schema {:?}", self.schema)));
        }
        match Primitive::ALL.into_iter().find(|&p| !(self.get(p) >= 0.0 && self.get(p).is_finite())) {
            Some(p) => Err(PlannerError::Format(format!("{} must be finite and non-negative", p.symbol()))),
            None => Ok(()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let profile: CostProfile = serde_json::from_str(text).map_err(|e| PlannerError::Format(e.to_string()))?;
        profile.validate()?;
        Ok(profile)
    }
}

/// Number of each primitive in one layer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimitiveCounts {
    #[serde(rename = "PM")]
    pub plain_mul: u64,
    #[serde(rename = "PA")]
    pub plain_add: u64,
    #[serde(rename = "EM")]
    pub enc_mul: u64,
    #[serde(rename = "EA")]
    pub enc_add: u64,
    #[serde(rename = "R")]
    pub rotation: u64,
}

impl PrimitiveCounts {
    pub fn get(&self, p: Primitive) -> u64 {
        match p {
            Primitive::PlainMul => self.plain_mul,
            Primitive::PlainAdd => self.plain_add,
            Primitive::EncMul => self.enc_mul,
            Primitive::EncAdd => self.enc_add,
            Primitive::Rotation => self.rotation,
        }
    }

    pub fn seconds(&self, profile: &CostProfile) -> f64 {
        Primitive::ALL.iter().map(|&p| self.get(p) as f64 * profile.get(p)).sum()
    }
}

fn layer_dims(spec: &HeadSpec, i: usize) -> (usize, usize) {
    (spec.dims[i], spec.dims[i + 1])
}

fn n_c(spec: &HeadSpec, params: &HeParams, i: usize) -> Result<u64> {
    let (d_in, d_out) = layer_dims(spec, i);
    Ok(chunk_layout(d_out, d_in, params.slot_capacity())?.n_c as u64)
}

fn log2_padded(d: usize) -> u64 {
    pad_dim(d).trailing_zeros() as u64
}

/// Layer cost as printed: `C(0) = n_c·[t_PM + (log2 d̂_0 − 1)(t_PA + t_R) + t_EA]` and
/// `C(i) = t_EM + n_c(i)·[2 t_EM + log2 d̂_i (t_EA + t_R) + t_EA]`.
pub fn formula_layer_cost(spec: &HeadSpec, params: &HeParams, profile: &CostProfile, i: usize) -> Result<f64> {
    let p = profile;
    let nc = n_c(spec, params, i)? as f64;
    let log_d = log2_padded(spec.dims[i]) as f64;
    Ok(if i == 0 {
        nc * (p.t_pm + (log_d - 1.0) * (p.t_pa + p.t_r) + p.t_ea)
    } else {
        p.t_em + nc * (2.0 * p.t_em + log_d * (p.t_ea + p.t_r) + p.t_ea)
    })
}

/// Primitive counts implied by the brackets of the layer cost formula.
pub fn formula_counts(spec: &HeadSpec, params: &HeParams, i: usize) -> Result<PrimitiveCounts> {
    let nc = n_c(spec, params, i)?;
    let log_d = log2_padded(spec.dims[i]);
    Ok(if i == 0 {
        PrimitiveCounts {
            plain_mul: nc,
            plain_add: nc * (log_d - 1),
            rotation: nc * (log_d - 1),
            enc_add: nc,
            enc_mul: 0,
        }
    } else {
        PrimitiveCounts { enc_mul: 1 + 2 * nc, enc_add: nc * (log_d + 1), rotation: nc * log_d, ..Default::default() }
    })
}

/// Traced counts of layer `i` as they are.
pub fn traced_counts(counts: &OpCounts, i: usize) -> PrimitiveCounts {
    PrimitiveCounts {
        plain_mul: counts.layer_kind(i, OpKind::PlainMul),
        plain_add: counts.layer_kind(i, OpKind::PlainAdd),
        enc_mul: counts.layer_kind(i, OpKind::EncMul),
        enc_add: counts.layer_kind(i, OpKind::EncAdd),
        rotation: counts.layer_kind(i, OpKind::Rotation),
    }
}

/// Traced counts of layer `i` after the two mapping exceptions: repack mask products move
/// from plain-mul to enc-mul, and replication operations are left out.
pub fn mapped_counts(counts: &OpCounts, i: usize) -> PrimitiveCounts {
    let raw = traced_counts(counts, i);
    let masks = counts.get(i, Role::Repack, OpKind::PlainMul);
    PrimitiveCounts {
        plain_mul: raw.plain_mul - masks,
        enc_mul: raw.enc_mul + masks,
        enc_add: raw.enc_add - counts.get(i, Role::Replicate, OpKind::EncAdd),
        rotation: raw.rotation - counts.get(i, Role::Replicate, OpKind::Rotation),
        ..raw
    }
}

/// Per-layer bound: `d_1·[t_EM + log2 d_0 (t_EA + t_R) + t_EA]` for the first layer,
/// `t_EM + d_max·[2 t_EM + log2(2 d_max)(t_EA + t_R) + t_EA]` for later ones. `d_max` is the
/// widest non-input dimension. Requires `N_D − 4 d_0 > 1` and `N_D − 4 d_max > 1`.
pub fn upper_bound_cost(spec: &HeadSpec, params: &HeParams, profile: &CostProfile) -> Result<Vec<f64>> {
    let n = params.poly_modulus_degree as f64;
    let d0 = spec.dims[0] as f64;
    let d_max = spec.dims[1..].iter().copied().max().unwrap_or(0) as f64;
    if n - 4.0 * d0 <= 1.0 {
        return Err(PlannerError::BoundNotApplicable(format!("N_D - 4 d_0 = {} is not > 1", n - 4.0 * d0)));
    }
    if n - 4.0 * d_max <= 1.0 {
        return Err(PlannerError::BoundNotApplicable(format!("N_D - 4 d_max = {} is not > 1", n - 4.0 * d_max)));
    }
    let p = profile;
    Ok((0..spec.layers())
        .map(|i| {
            if i == 0 {
                spec.dims[1] as f64 * (p.t_em + d0.log2() * (p.t_ea + p.t_r) + p.t_ea)
            } else {
                p.t_em + d_max * (2.0 * p.t_em + (2.0 * d_max).log2() * (p.t_ea + p.t_r) + p.t_ea)
            }
        })
        .collect())
}

/// Primitive count where formula and mapped trace disagree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub layer: usize,
    pub primitive: Primitive,
    pub formula: u64,
    pub traced: u64,
}

pub fn divergences(formula: &[PrimitiveCounts], mapped: &[PrimitiveCounts]) -> Vec<Divergence> {
    formula
        .iter()
        .zip(mapped)
        .enumerate()
        .flat_map(|(layer, (f, t))| {
            Primitive::ALL.into_iter().filter_map(move |p| {
                (f.get(p) != t.get(p)).then(|| Divergence { layer, primitive: p, formula: f.get(p), traced: t.get(p) })
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerCost {
    pub layer: usize,
    pub d_in: usize,
    pub d_out: usize,
    pub n_c: u64,
    /// `C(i)` in seconds.
    pub predicted: f64,
    /// Traced operation counts weighted by the profile, with every key switch charged as one rotation.
    pub traced: f64,
    pub upper_bound: Option<f64>,
    /// Rotate-and-add steps per chunk in the formula and in the circuit.
    pub formula_rotate_steps: u64,
    pub circuit_rotate_steps: u64,
    pub formula_counts: PrimitiveCounts,
    pub traced_counts: PrimitiveCounts,
    pub key_switches: u64,
}

fn breakdown_schema() -> String {
    BREAKDOWN_SCHEMA.to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    #[serde(default = "breakdown_schema")]
    pub schema: String,
    pub dims: Vec<usize>,
    pub poly_modulus_degree: usize,
    pub layers: Vec<LayerCost>,
    pub total: f64,
    pub traced_total: f64,
    /// Mismatches between the formula brackets and the mapped trace.
    pub divergences: Vec<Divergence>,
}

/// Evaluates the formula for every layer and, alongside it, the cost of the operations the circuit actually runs.
pub fn predict_cost(spec: &HeadSpec, params: &HeParams, profile: &CostProfile) -> Result<CostBreakdown> {
    spec.validate(params.slot_capacity())?;
    let (counts, _) = trace_circuit(spec, params)?;
    let bounds = upper_bound_cost(spec, params, profile).ok();
    let mut layers = Vec::with_capacity(spec.layers());
    let mut formula = Vec::with_capacity(spec.layers());
    let mut mapped = Vec::with_capacity(spec.layers());
    for i in 0..spec.layers() {
        let (d_in, d_out) = layer_dims(spec, i);
        let raw = traced_counts(&counts, i);
        let key_switches = counts.layer_kind(i, OpKind::KeySwitch);
        let traced = PrimitiveCounts { rotation: key_switches, ..raw }.seconds(profile);
        let log_d = log2_padded(d_in);
        layers.push(LayerCost {
            layer: i,
            d_in,
            d_out,
            n_c: n_c(spec, params, i)?,
            predicted: formula_layer_cost(spec, params, profile, i)?,
            traced,
            upper_bound: bounds.as_ref().map(|b| b[i]),
            formula_rotate_steps: if i == 0 { log_d - 1 } else { log_d },
            circuit_rotate_steps: log_d,
            formula_counts: formula_counts(spec, params, i)?,
            traced_counts: raw,
            key_switches,
        });
        formula.push(formula_counts(spec, params, i)?);
        mapped.push(mapped_counts(&counts, i));
    }
    Ok(CostBreakdown {
        schema: breakdown_schema(),
        dims: spec.dims.clone(),
        poly_modulus_degree: params.poly_modulus_degree,
        total: layers.iter().map(|l| l.predicted).sum(),
        traced_total: layers.iter().map(|l| l.traced).sum(),
        layers,
        divergences: divergences(&formula, &mapped),
    })
}

impl CostBreakdown {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("breakdown serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use he_core::BackendKind;

    fn params(n: usize) -> HeParams {
        HeParams::from_chain(n, 33, 43, 1, 33, BackendKind::Simulator)
    }

    fn spec(dims: &[usize]) -> HeadSpec {
        HeadSpec::new(dims.to_vec()).unwrap()
    }

    #[test]
    fn formula_examples() {
        let unit = CostProfile::uniform(1.0);
        assert_eq!(formula_layer_cost(&spec(&[256, 10]), &params(8192), &unit, 0).unwrap(), 16.0);
        assert_eq!(formula_layer_cost(&spec(&[64, 16, 10]), &params(8192), &unit, 1).unwrap(), 12.0);
        let zero = CostProfile::uniform(0.0);
        for dims in [&[256, 10][..], &[64, 16, 10]] {
            let s = spec(dims);
            let total: f64 = (0..s.layers()).map(|i| formula_layer_cost(&s, &params(8192), &zero, i).unwrap()).sum();
            assert_eq!(total, 0.0);
        }
    }

    #[test]
    fn counts_reproduce_the_formula() {
        let profile = CostProfile { t_pm: 2.0, t_pa: 3.0, t_em: 5.0, t_ea: 7.0, t_r: 11.0, ..CostProfile::uniform(0.0) };
        let s = spec(&[1280, 16, 10]);
        for i in 0..2 {
            let direct = formula_layer_cost(&s, &params(8192), &profile, i).unwrap();
            assert_eq!(formula_counts(&s, &params(8192), i).unwrap().seconds(&profile), direct);
        }
    }

    #[test]
    fn bound_examples() {
        let unit = CostProfile::uniform(1.0);
        let b = upper_bound_cost(&spec(&[2048, 100]), &params(16384), &unit).unwrap();
        assert_eq!(b, vec![2400.0]);
        assert!(matches!(
            upper_bound_cost(&spec(&[2048, 100]), &params(8192), &unit),
            Err(PlannerError::BoundNotApplicable(_))
        ));
    }

    #[test]
    fn profile_json_roundtrip() {
        let mut p = CostProfile::uniform(1e-3);
        p.machine = "test".into();
        p.params = Some(params(8192));
        let text = p.to_json();
        for key in ["\"t_PM\"", "\"t_PA\"", "\"t_EM\"", "\"t_EA\"", "\"t_R\"", "\"machine\"", "\"params\"", "\"schema\""] {
            assert!(text.contains(key), "{key}");
        }
        assert_eq!(CostProfile::from_json(&text).unwrap(), p);
        p.t_r = -1.0;
        assert!(CostProfile::from_json(&p.to_json()).is_err());
    }
}
