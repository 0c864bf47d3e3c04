//! Exchangeable-group EMOS link functions.
//!
//! An ensemble of `M` members is partitioned into `m` groups of exchangeable
//! members. Members of one group share a location coefficient, so the
//! location is `a₀ + Σₖ aₖ·(sum of group k)` and the scale is
//! `√(b₀ + b₁·S²)` with `S²` the ensemble variance. The simplified
//! formulation uses the ensemble mean instead of a single group sum.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distributions::TnParams;
use crate::error::{Error, Result};

/// Sample mean and variance (divisor `M − 1`) of an ensemble forecast.
pub fn ensemble_stats(forecast: &[f64]) -> Result<(f64, f64)> {
    if forecast.len() < 2 {
        return Err(Error::domain(format!(
            "ensemble variance needs at least 2 members, got {}",
            forecast.len()
        )));
    }
    if forecast.iter().any(|f| !f.is_finite()) {
        return Err(Error::domain("non-finite ensemble member"));
    }
    let m = forecast.len() as f64;
    let mean = forecast.iter().sum::<f64>() / m;
    let var = forecast.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (m - 1.0);
    Ok((mean, var))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Group {
    pub id: String,
    pub members: Vec<usize>,
}

/// A partition of the member columns `0..M` into labelled exchangeable groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupStructure {
    groups: Vec<Group>,
    n_members: usize,
}

impl GroupStructure {
    pub fn new(groups: Vec<Group>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::Structural("no groups declared".into()));
        }
        let n_members: usize = groups.iter().map(|g| g.members.len()).sum();
        let mut seen = vec![false; n_members];
        let mut ids = HashSet::new();
        for g in &groups {
            if g.members.is_empty() {
                return Err(Error::Structural(format!("group '{}' is empty", g.id)));
            }
            if !ids.insert(g.id.as_str()) {
                return Err(Error::Structural(format!("duplicate group id '{}'", g.id)));
            }
            for &i in &g.members {
                if i >= n_members || seen[i] {
                    return Err(Error::Structural(format!(
                        "group '{}' member {i} is out of range or assigned twice",
                        g.id
                    )));
                }
                seen[i] = true;
            }
        }
        Ok(GroupStructure { groups, n_members })
    }

    /// A single group holding every member.
    pub fn single(n_members: usize) -> Result<Self> {
        GroupStructure::new(vec![Group {
            id: "all".into(),
            members: (0..n_members).collect(),
        }])
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    /// Number of groups `m`.
    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    /// Total number of members `M`.
    pub fn n_members(&self) -> usize {
        self.n_members
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(|g| g.members.len()).collect()
    }
}

/// Column roles within one subensemble.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subensemble {
    pub name: String,
    pub control: Option<usize>,
    pub perturbed: Vec<usize>,
    pub lagged: Vec<usize>,
}

/// Declares, per subensemble, which member columns are control, perturbed
/// and lagged perturbed forecasts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleLayout {
    subensembles: Vec<Subensemble>,
    n_members: usize,
}

impl EnsembleLayout {
    pub fn new(subensembles: Vec<Subensemble>) -> Result<Self> {
        let n_members = subensembles
            .iter()
            .map(|s| s.control.iter().count() + s.perturbed.len() + s.lagged.len())
            .sum();
        let mut seen = vec![false; n_members];
        let mut names = HashSet::new();
        for s in &subensembles {
            if !names.insert(s.name.as_str()) {
                return Err(Error::Structural(format!("duplicate subensemble '{}'", s.name)));
            }
            for &i in s.control.iter().chain(&s.perturbed).chain(&s.lagged) {
                if i >= n_members || seen[i] {
                    return Err(Error::Structural(format!(
                        "subensemble '{}': column {i} overlaps another role or leaves a gap",
                        s.name
                    )));
                }
                seen[i] = true;
            }
        }
        if n_members == 0 {
            return Err(Error::Structural("layout declares no members".into()));
        }
        Ok(EnsembleLayout { subensembles, n_members })
    }

    /// Four subensembles (`AI`, `AS`, `HK`, `HS`), each with a control,
    /// six perturbed and six lagged perturbed members: 52 columns in total.
    pub fn glameps() -> Self {
        Self::regular(&["AI", "AS", "HK", "HS"], true, 6, 6)
    }

    /// `M` interchangeable perturbed members in one subensemble.
    pub fn exchangeable(n_members: usize) -> Self {
        Self::regular(&["E"], false, n_members, 0)
    }

    /// Subensembles that share the same shape. Columns are laid out
    /// subensemble by subensemble: control, perturbed, lagged.
    pub fn regular(names: &[&str], control: bool, perturbed: usize, lagged: usize) -> Self {
        let mut next = 0;
        let mut take = |n: usize| {
            let cols: Vec<usize> = (next..next + n).collect();
            next += n;
            cols
        };
        let subs = names
            .iter()
            .map(|name| Subensemble {
                name: name.to_string(),
                control: if control { Some(take(1)[0]) } else { None },
                perturbed: take(perturbed),
                lagged: take(lagged),
            })
            .collect();
        EnsembleLayout::new(subs).expect("regular layouts are partitions")
    }

    pub fn subensembles(&self) -> &[Subensemble] {
        &self.subensembles
    }

    pub fn n_members(&self) -> usize {
        self.n_members
    }

    /// Column names `m_<sub>_c`, `m_<sub>_p<i>`, `m_<sub>_l<i>` in column order.
    pub fn column_names(&self) -> Vec<String> {
        let mut names = vec![String::new(); self.n_members];
        for s in &self.subensembles {
            if let Some(c) = s.control {
                names[c] = format!("m_{}_c", s.name);
            }
            for (k, &i) in s.perturbed.iter().enumerate() {
                names[i] = format!("m_{}_p{}", s.name, k + 1);
            }
            for (k, &i) in s.lagged.iter().enumerate() {
                names[i] = format!("m_{}_l{}", s.name, k + 1);
            }
        }
        names
    }

    /// Recover the layout from member column names; column `i` of `names`
    /// becomes member `i`.
    pub fn from_column_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut subs: Vec<Subensemble> = Vec::new();
        for (i, name) in names.iter().enumerate() {
            let name = name.as_ref();
            let rest = name
                .strip_prefix("m_")
                .ok_or_else(|| Error::Structural(format!("member column '{name}' lacks the 'm_' prefix")))?;
            let (sub, role) = rest
                .rsplit_once('_')
                .ok_or_else(|| Error::Structural(format!("member column '{name}' lacks a role suffix")))?;
            if sub.is_empty() {
                return Err(Error::Structural(format!("member column '{name}' has an empty subensemble")));
            }
            let pos = match subs.iter().position(|s| s.name == sub) {
                Some(p) => p,
                None => {
                    subs.push(Subensemble {
                        name: sub.to_string(),
                        control: None,
                        perturbed: vec![],
                        lagged: vec![],
                    });
                    subs.len() - 1
                }
            };
            let entry = &mut subs[pos];
            let bad_role = || Error::Structural(format!("member column '{name}': unknown role '{role}'"));
            match role.as_bytes().first() {
                Some(b'c') if role == "c" => {
                    if entry.control.replace(i).is_some() {
                        return Err(Error::Structural(format!("subensemble '{sub}' has two controls")));
                    }
                }
                Some(b'p') if role[1..].parse::<u32>().is_ok() => entry.perturbed.push(i),
                Some(b'l') if role[1..].parse::<u32>().is_ok() => entry.lagged.push(i),
                _ => return Err(bad_role()),
            }
        }
        EnsembleLayout::new(subs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Separate groups for controls, perturbed and lagged perturbed members.
    Full,
    /// Lagged and non-lagged perturbed members of a subensemble share a group.
    LagIgnoring,
    /// One exchangeable group linked through the ensemble mean.
    Simplified,
    /// A user-declared group structure.
    Custom,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Full => "full",
            Variant::LagIgnoring => "lag_ignoring",
            Variant::Simplified => "simplified",
            Variant::Custom => "custom",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Variant::Full),
            "lag_ignoring" | "lag-ignoring" => Ok(Variant::LagIgnoring),
            "simplified" => Ok(Variant::Simplified),
            "custom" => Ok(Variant::Custom),
            _ => Err(Error::Config(format!("unknown model variant '{s}'"))),
        }
    }
}

/// Location coefficients `a₀, a₁…a_m` and scale coefficients `b₀, b₁`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmosCoefficients {
    pub intercept: f64,
    pub group_coeffs: Vec<f64>,
    pub scale_intercept: f64,
    pub scale_slope: f64,
}

impl EmosCoefficients {
    pub fn validate(&self, n_groups: usize) -> Result<()> {
        if self.group_coeffs.len() != n_groups {
            return Err(Error::Structural(format!(
                "{} group coefficients for {n_groups} groups",
                self.group_coeffs.len()
            )));
        }
        let all = [self.intercept, self.scale_intercept, self.scale_slope];
        if all.iter().chain(&self.group_coeffs).any(|c| !c.is_finite()) {
            return Err(Error::InvalidCoefficients("non-finite coefficient".into()));
        }
        if self.scale_intercept < 0.0 || self.scale_slope < 0.0 {
            return Err(Error::InvalidCoefficients(format!(
                "scale coefficients must be non-negative (b0={}, b1={})",
                self.scale_intercept, self.scale_slope
            )));
        }
        if self.scale_intercept == 0.0 && self.scale_slope == 0.0 {
            return Err(Error::InvalidCoefficients("b0 and b1 are both zero".into()));
        }
        Ok(())
    }
}

/// A model variant with its group structure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFormulation {
    variant: Variant,
    structure: GroupStructure,
}

impl ModelFormulation {
    pub fn custom(structure: GroupStructure) -> Self {
        ModelFormulation {
            variant: Variant::Custom,
            structure,
        }
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn structure(&self) -> &GroupStructure {
        &self.structure
    }

    pub fn n_groups(&self) -> usize {
        self.structure.n_groups()
    }

    pub fn n_members(&self) -> usize {
        self.structure.n_members()
    }

    /// Number of free parameters, `m + 3`.
    pub fn n_params(&self) -> usize {
        self.n_groups() + 3
    }

    /// Per-group regressors: the group sums, or the ensemble mean for the
    /// simplified formulation.
    pub fn predictors(&self, forecast: &[f64]) -> Result<Vec<f64>> {
        if forecast.len() != self.n_members() {
            return Err(Error::Structural(format!(
                "forecast has {} members, formulation expects {}",
                forecast.len(),
                self.n_members()
            )));
        }
        if self.variant == Variant::Simplified {
            return Ok(vec![forecast.iter().sum::<f64>() / forecast.len() as f64]);
        }
        Ok(self
            .structure
            .groups()
            .iter()
            .map(|g| g.members.iter().map(|&i| forecast[i]).sum())
            .collect())
    }

    /// Coefficients that reproduce the raw ensemble mean as location, with
    /// `b₀ = b₁ = 1`.
    pub fn default_coefficients(&self) -> EmosCoefficients {
        let coeff = if self.variant == Variant::Simplified {
            1.0
        } else {
            1.0 / self.n_members() as f64
        };
        EmosCoefficients {
            intercept: 0.0,
            group_coeffs: vec![coeff; self.n_groups()],
            scale_intercept: 1.0,
            scale_slope: 1.0,
        }
    }

    /// Map a forecast to its predictive truncated normal.
    pub fn link(&self, coeffs: &EmosCoefficients, forecast: &[f64]) -> Result<TnParams> {
        coeffs.validate(self.n_groups())?;
        let x = self.predictors(forecast)?;
        let (_, var) = ensemble_stats(forecast)?;
        let location = coeffs.intercept + coeffs.group_coeffs.iter().zip(&x).map(|(a, v)| a * v).sum::<f64>();
        let scale2 = coeffs.scale_intercept + coeffs.scale_slope * var;
        if !(scale2 > 0.0) {
            return Err(Error::InvalidCoefficients(format!("non-positive squared scale {scale2}")));
        }
        TnParams::new(location, scale2.sqrt())
    }
}

/// Group structure for a variant over a subensemble layout.
///
/// `Custom` has no layout-derived structure; use [`ModelFormulation::custom`].
pub fn build_formulation(variant: Variant, layout: &EnsembleLayout) -> Result<ModelFormulation> {
    let mut groups = Vec::new();
    match variant {
        Variant::Simplified => {
            return Ok(ModelFormulation {
                variant,
                structure: GroupStructure::single(layout.n_members())?,
            })
        }
        Variant::Custom => return Err(Error::Structural("custom formulations take an explicit group structure".into())),
        Variant::Full => {
            for s in layout.subensembles() {
                push_nonempty(&mut groups, s.name.clone(), s.perturbed.clone());
                push_nonempty(&mut groups, format!("{}L", s.name), s.lagged.clone());
                push_nonempty(&mut groups, format!("{}_c", s.name), s.control.into_iter().collect());
            }
        }
        Variant::LagIgnoring => {
            for s in layout.subensembles() {
                let merged = s.perturbed.iter().chain(&s.lagged).copied().collect();
                push_nonempty(&mut groups, s.name.clone(), merged);
                push_nonempty(&mut groups, format!("{}_c", s.name), s.control.into_iter().collect());
            }
        }
    }
    Ok(ModelFormulation {
        variant,
        structure: GroupStructure::new(groups)?,
    })
}

fn push_nonempty(groups: &mut Vec<Group>, id: String, members: Vec<usize>) {
    if !members.is_empty() {
        groups.push(Group { id, members });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn stats_examples() {
        assert_eq!(ensemble_stats(&[1.0; 4]).unwrap(), (1.0, 0.0));
        assert_eq!(ensemble_stats(&[0.0, 2.0]).unwrap(), (1.0, 2.0));
        assert_eq!(ensemble_stats(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap(), (3.5, 3.5));
        assert!(ensemble_stats(&[1.0]).is_err());
    }

    #[test]
    fn simplified_identity_link() {
        let f = build_formulation(Variant::Simplified, &EnsembleLayout::exchangeable(2)).unwrap();
        let c = EmosCoefficients {
            intercept: 0.0,
            group_coeffs: vec![1.0],
            scale_intercept: 1.0,
            scale_slope: 0.0,
        };
        assert_eq!(f.link(&c, &[2.0, 4.0]).unwrap(), TnParams::new(3.0, 1.0).unwrap());
    }

    #[test]
    fn group_sum_link() {
        let f = ModelFormulation::custom(GroupStructure::single(2).unwrap());
        let c = EmosCoefficients {
            intercept: 0.0,
            group_coeffs: vec![0.5],
            scale_intercept: 0.0,
            scale_slope: 1.0,
        };
        let p = f.link(&c, &[0.0, 2.0]).unwrap();
        assert_eq!(p.location, 1.0);
        assert!((p.scale - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn glameps_group_counts() {
        let layout = EnsembleLayout::glameps();
        assert_eq!(layout.n_members(), 52);
        let full = build_formulation(Variant::Full, &layout).unwrap();
        assert_eq!(full.n_groups(), 12);
        assert_eq!(full.n_params(), 15);
        let mut sizes = full.structure().group_sizes();
        sizes.sort();
        assert_eq!(sizes, [1, 1, 1, 1, 6, 6, 6, 6, 6, 6, 6, 6]);
        let lag = build_formulation(Variant::LagIgnoring, &layout).unwrap();
        assert_eq!(lag.n_groups(), 8);
        assert_eq!(lag.n_params(), 11);
        let mut sizes = lag.structure().group_sizes();
        sizes.sort();
        assert_eq!(sizes, [1, 1, 1, 1, 12, 12, 12, 12]);
        let simple = build_formulation(Variant::Simplified, &layout).unwrap();
        assert_eq!(simple.n_groups(), 1);
        assert_eq!(simple.n_params(), 4);
        assert!(build_formulation(Variant::Custom, &layout).is_err());
    }

    #[test]
    fn full_default_reproduces_mean() {
        let f = build_formulation(Variant::Full, &EnsembleLayout::glameps()).unwrap();
        let forecast: Vec<f64> = (0..52).map(|i| 2.0 + (i as f64 * 0.37).sin()).collect();
        let (mean, _) = ensemble_stats(&forecast).unwrap();
        let mut c = f.default_coefficients();
        c.intercept = 0.7;
        let p = f.link(&c, &forecast).unwrap();
        assert!((p.location - (0.7 + mean)).abs() < 1e-12);
    }

    #[test]
    fn link_errors() {
        let f = build_formulation(Variant::Full, &EnsembleLayout::glameps()).unwrap();
        let c = f.default_coefficients();
        assert!(matches!(f.link(&c, &[1.0; 10]), Err(Error::Structural(_))));
        let bad = EmosCoefficients {
            group_coeffs: vec![0.1; 3],
            ..c.clone()
        };
        assert!(matches!(f.link(&bad, &[1.0; 52]), Err(Error::Structural(_))));
        let zero = EmosCoefficients {
            scale_intercept: 0.0,
            scale_slope: 1.0,
            ..c
        };
        // constant forecast: S² = 0 so the scale vanishes
        assert!(matches!(f.link(&zero, &[1.0; 52]), Err(Error::InvalidCoefficients(_))));
    }

    #[test]
    fn layout_column_names_round_trip() {
        let layout = EnsembleLayout::glameps();
        let names = layout.column_names();
        assert_eq!(names[0], "m_AI_c");
        assert_eq!(names[1], "m_AI_p1");
        assert_eq!(names[7], "m_AI_l1");
        assert_eq!(EnsembleLayout::from_column_names(&names).unwrap(), layout);
    }

    #[test]
    fn layout_rejects_bad_columns() {
        assert!(EnsembleLayout::from_column_names(&["x_AI_p1"]).is_err());
        assert!(EnsembleLayout::from_column_names(&["m_AI_q1"]).is_err());
        assert!(EnsembleLayout::from_column_names(&["m_AI_c", "m_AI_c"]).is_err());
        let overlap = Subensemble {
            name: "A".into(),
            control: Some(0),
            perturbed: vec![0, 1],
            lagged: vec![],
        };
        assert!(EnsembleLayout::new(vec![overlap]).is_err());
        assert!(GroupStructure::new(vec![
            Group {
                id: "a".into(),
                members: vec![0]
            },
            Group {
                id: "a".into(),
                members: vec![1]
            },
        ])
        .is_err());
    }

    fn glameps_forecast() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..25.0, 52)
    }

    proptest! {
        #[test]
        fn n_params_is_groups_plus_three(p in 0usize..5, l in 0usize..5, c in any::<bool>(), subs in 1usize..4) {
            prop_assume!(p + l + usize::from(c) > 0);
            let names: Vec<String> = (0..subs).map(|i| format!("S{i}")).collect();
            let refs: Vec<&str> = names.iter().map(String::as_str).collect();
            let layout = EnsembleLayout::regular(&refs, c, p, l);
            for v in [Variant::Full, Variant::LagIgnoring, Variant::Simplified] {
                let f = build_formulation(v, &layout).unwrap();
                prop_assert_eq!(f.n_params(), f.n_groups() + 3);
            }
        }

        #[test]
        fn within_group_permutation_invariance(forecast in glameps_forecast(), swap in 0usize..6) {
            let f = build_formulation(Variant::Full, &EnsembleLayout::glameps()).unwrap();
            let mut c = f.default_coefficients();
            for (k, a) in c.group_coeffs.iter_mut().enumerate() {
                *a = 0.01 * (k as f64 + 1.0);
            }
            let base = f.link(&c, &forecast).unwrap();
            // swap two perturbed members of subensemble AI (columns 1..=6)
            let mut permuted = forecast.clone();
            permuted.swap(1, 1 + swap);
            let other = f.link(&c, &permuted).unwrap();
            prop_assert!((base.location - other.location).abs() < 1e-12);
            prop_assert!((base.scale - other.scale).abs() < 1e-12);
        }

        #[test]
        fn full_equals_lag_ignoring_with_tied_coefficients(forecast in glameps_forecast(), coeffs in prop::collection::vec(-0.2f64..0.2, 8)) {
            let layout = EnsembleLayout::glameps();
            let full = build_formulation(Variant::Full, &layout).unwrap();
            let lag = build_formulation(Variant::LagIgnoring, &layout).unwrap();
            // lag-ignoring order per subensemble: [merged, control]; full: [perturbed, lagged, control]
            let mut full_coeffs = Vec::new();
            for s in 0..4 {
                full_coeffs.extend([coeffs[2 * s], coeffs[2 * s], coeffs[2 * s + 1]]);
            }
            let c_lag = EmosCoefficients { intercept: 0.3, group_coeffs: coeffs.clone(), scale_intercept: 0.5, scale_slope: 0.8 };
            let c_full = EmosCoefficients { group_coeffs: full_coeffs, ..c_lag.clone() };
            let a = full.link(&c_full, &forecast).unwrap();
            let b = lag.link(&c_lag, &forecast).unwrap();
            prop_assert!((a.location - b.location).abs() < 1e-12 * (1.0 + a.location.abs()));
            prop_assert_eq!(a.scale, b.scale);
        }

        #[test]
        fn scale_bounded_below_by_intercept(forecast in prop::collection::vec(0.0f64..25.0, 2..20), b0 in 0.01f64..5.0, b1 in 0.0f64..5.0) {
            let f = build_formulation(Variant::Simplified, &EnsembleLayout::exchangeable(forecast.len())).unwrap();
            let c = EmosCoefficients { intercept: 0.0, group_coeffs: vec![1.0], scale_intercept: b0, scale_slope: b1 };
            let p = f.link(&c, &forecast).unwrap();
            prop_assert!(p.scale * p.scale >= b0 * (1.0 - 1e-12));
        }
    }
}
