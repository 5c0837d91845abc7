//! JSON model, transformation, beliefs and evidence files.
//!
//! Energies and factors accept the string `"inf"` for `+inf`. Floats are
//! written in shortest round-trip form.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::{json, Map, Value};

use crate::energy::{hamiltonians_from_factors, Hamiltonians};
use crate::error::{Error, Result};
use crate::poset::Poset;
use crate::presheaf::{FieldBundle, FiniteSetPresheaf, GraphicalSpec, InnerProductWeights};
use crate::transform::NaturalTransformation;

/// A validated model.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub presheaf: FiniteSetPresheaf,
    pub hamiltonians: Hamiltonians,
    pub weights: Option<InnerProductWeights>,
    pub graphical: Option<GraphicalSpec>,
}

impl Model {
    pub fn poset(&self) -> &Arc<Poset> {
        self.presheaf.poset()
    }

    /// Configured weights, or the standard ones.
    pub fn weights_or_ones(&self) -> InnerProductWeights {
        self.weights
            .clone()
            .unwrap_or_else(|| InnerProductWeights::ones(&self.presheaf))
    }
}

fn parse_json(text: &str) -> Result<Value> {
    serde_json::from_str(text)
        .map_err(|e| Error::Parse(format!("line {}, column {}: {e}", e.line(), e.column())))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, ctx: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| Error::Parse(format!("{ctx}: missing field `{key}`")))
}

fn as_object<'a>(v: &'a Value, ctx: &str) -> Result<&'a Map<String, Value>> {
    v.as_object()
        .ok_or_else(|| Error::Parse(format!("{ctx}: expected an object")))
}

fn as_array<'a>(v: &'a Value, ctx: &str) -> Result<&'a Vec<Value>> {
    v.as_array()
        .ok_or_else(|| Error::Parse(format!("{ctx}: expected an array")))
}

fn as_str<'a>(v: &'a Value, ctx: &str) -> Result<&'a str> {
    v.as_str()
        .ok_or_else(|| Error::Parse(format!("{ctx}: expected a string")))
}

fn as_usize(v: &Value, ctx: &str) -> Result<usize> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| Error::Parse(format!("{ctx}: expected a non-negative integer")))
}

/// A number, or `"inf"` / `"+inf"` / `"-inf"`.
fn as_real(v: &Value, ctx: &str) -> Result<f64> {
    match v {
        Value::Number(n) => n
            .as_f64()
            .ok_or_else(|| Error::Parse(format!("{ctx}: number out of range"))),
        Value::String(s) => match s.as_str() {
            "inf" | "+inf" | "Infinity" => Ok(f64::INFINITY),
            "-inf" | "-Infinity" => Ok(f64::NEG_INFINITY),
            _ => Err(Error::Parse(format!("{ctx}: expected a number or \"inf\", got \"{s}\""))),
        },
        _ => Err(Error::Parse(format!("{ctx}: expected a number"))),
    }
}

fn real_json(x: f64) -> Value {
    if x == f64::INFINITY {
        json!("inf")
    } else if x == f64::NEG_INFINITY {
        json!("-inf")
    } else if x == 0.0 {
        json!(0.0)
    } else {
        json!(x)
    }
}

fn vector_json(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| real_json(x)).collect())
}

/// `{element: [values]}` over all elements; missing elements get `default`.
fn parse_bundle(
    v: &Value,
    f: &FiniteSetPresheaf,
    ctx: &str,
    default: Option<f64>,
) -> Result<FieldBundle> {
    let obj = as_object(v, ctx)?;
    let p = f.poset();
    for key in obj.keys() {
        p.index_of(key)
            .map_err(|_| Error::Validation(format!("{ctx}: unknown element `{key}`")))?;
    }
    let mut out = Vec::with_capacity(p.len());
    for a in 0..p.len() {
        let name = p.name(a);
        match obj.get(name) {
            Some(row) => {
                let arr = as_array(row, &format!("{ctx}.{name}"))?;
                if arr.len() != f.size(a) {
                    return Err(Error::Validation(format!(
                        "{ctx}.{name}: {} values for {} states",
                        arr.len(),
                        f.size(a)
                    )));
                }
                let vals = arr
                    .iter()
                    .enumerate()
                    .map(|(i, x)| as_real(x, &format!("{ctx}.{name}[{i}]")))
                    .collect::<Result<Vec<_>>>()?;
                out.push(vals);
            }
            None => match default {
                Some(d) => out.push(vec![d; f.size(a)]),
                None => return Err(Error::Validation(format!("{ctx}: missing element `{name}`"))),
            },
        }
    }
    Ok(FieldBundle(out))
}

pub fn bundle_json(f: &FiniteSetPresheaf, b: &FieldBundle) -> Value {
    let mut m = Map::new();
    for (a, name) in f.poset().names().iter().enumerate() {
        m.insert(name.clone(), vector_json(b.get(a)));
    }
    Value::Object(m)
}

fn parse_graphical(v: &Value) -> Result<GraphicalSpec> {
    let obj = as_object(v, "graphical")?;
    let vars = as_array(field(obj, "variables", "graphical")?, "graphical.variables")?;
    let mut variables = Vec::with_capacity(vars.len());
    for (i, var) in vars.iter().enumerate() {
        let ctx = format!("graphical.variables[{i}]");
        let o = as_object(var, &ctx)?;
        let name = as_str(field(o, "name", &ctx)?, &ctx)?.to_string();
        let size = as_usize(field(o, "size", &ctx)?, &ctx)?;
        variables.push((name, size));
    }
    let regs = as_array(field(obj, "regions", "graphical")?, "graphical.regions")?;
    let mut regions: Vec<Vec<String>> = Vec::with_capacity(regs.len());
    for (r, reg) in regs.iter().enumerate() {
        let ctx = format!("graphical.regions[{r}]");
        regions.push(
            as_array(reg, &ctx)?
                .iter()
                .map(|x| as_str(x, &ctx).map(String::from))
                .collect::<Result<_>>()?,
        );
    }
    GraphicalSpec::new(variables, &regions)
}

fn parse_explicit(poset_v: &Value, presheaf_v: &Value) -> Result<FiniteSetPresheaf> {
    let po = as_object(poset_v, "poset")?;
    let elements: Vec<String> = as_array(field(po, "elements", "poset")?, "poset.elements")?
        .iter()
        .map(|x| as_str(x, "poset.elements").map(String::from))
        .collect::<Result<_>>()?;
    let mut rel = Vec::new();
    if let Some(leq) = po.get("leq") {
        for (i, pair) in as_array(leq, "poset.leq")?.iter().enumerate() {
            let ctx = format!("poset.leq[{i}]");
            let pr = as_array(pair, &ctx)?;
            if pr.len() != 2 {
                return Err(Error::Parse(format!("{ctx}: expected [lower, upper]")));
            }
            rel.push((as_str(&pr[0], &ctx)?.to_string(), as_str(&pr[1], &ctx)?.to_string()));
        }
    }
    let poset = Arc::new(Poset::new(&elements, &rel)?);

    let ps = as_object(presheaf_v, "presheaf")?;
    let sets = as_object(field(ps, "sets", "presheaf")?, "presheaf.sets")?;
    let mut sizes = Vec::with_capacity(poset.len());
    for name in poset.names() {
        let v = sets
            .get(name)
            .ok_or_else(|| Error::Validation(format!("presheaf.sets: missing element `{name}`")))?;
        sizes.push(as_usize(v, &format!("presheaf.sets.{name}"))?);
    }
    for key in sets.keys() {
        poset.index_of(key)?;
    }
    let empty = Map::new();
    let maps_obj = match ps.get("maps") {
        Some(m) => as_object(m, "presheaf.maps")?,
        None => &empty,
    };
    for key in maps_obj.keys() {
        let (a, b) = key
            .split_once("->")
            .ok_or_else(|| Error::Parse(format!("presheaf.maps: key `{key}` is not of the form \"a->b\"")))?;
        let (a, b) = (poset.index_of(a.trim())?, poset.index_of(b.trim())?);
        if a == b || !poset.leq(b, a) {
            return Err(Error::NotComparable {
                a: poset.name(a).into(),
                b: poset.name(b).into(),
            });
        }
    }
    let mut maps = Vec::with_capacity(poset.pairs().len());
    for &(a, b) in poset.pairs() {
        let (na, nb) = (poset.name(a), poset.name(b));
        let found = maps_obj
            .iter()
            .find(|(k, _)| k.split_once("->").map(|(x, y)| (x.trim(), y.trim())) == Some((na, nb)));
        let m = match found {
            Some((k, v)) => as_array(v, &format!("presheaf.maps.{k}"))?
                .iter()
                .map(|x| as_usize(x, &format!("presheaf.maps.{k}")))
                .collect::<Result<Vec<_>>>()?,
            // a single target state needs no explicit map
            None if sizes[b] == 1 => vec![0; sizes[a]],
            None => return Err(Error::Validation(format!("presheaf.maps: missing map \"{na}->{nb}\""))),
        };
        maps.push(m);
    }
    FiniteSetPresheaf::new(poset, sizes, maps)
}

/// Parses and validates a model document.
pub fn parse_model(text: &str) -> Result<Model> {
    let v = parse_json(text)?;
    let obj = as_object(&v, "model")?;
    let (presheaf, graphical) = match (obj.get("graphical"), obj.get("poset"), obj.get("presheaf")) {
        (Some(g), None, None) => {
            let spec = parse_graphical(g)?;
            (spec.presheaf()?, Some(spec))
        }
        (None, Some(p), Some(s)) => (parse_explicit(p, s)?, None),
        (Some(_), _, _) => {
            return Err(Error::Parse(
                "model: give either `graphical` or `poset` with `presheaf`, not both".into(),
            ))
        }
        _ => return Err(Error::Parse("model: missing `graphical` or `poset`/`presheaf`".into())),
    };
    let hamiltonians = match (obj.get("hamiltonians"), obj.get("factors")) {
        (Some(_), Some(_)) => {
            return Err(Error::Parse("model: give either `hamiltonians` or `factors`, not both".into()))
        }
        (Some(h), None) => Hamiltonians::new(&presheaf, parse_bundle(h, &presheaf, "hamiltonians", Some(0.0))?)?,
        (None, Some(f)) => hamiltonians_from_factors(&presheaf, &parse_bundle(f, &presheaf, "factors", Some(1.0))?)?,
        (None, None) => Hamiltonians::zeros(&presheaf),
    };
    let weights = match obj.get("weights") {
        Some(w) => Some(InnerProductWeights::new(parse_bundle(w, &presheaf, "weights", Some(1.0))?)?),
        None => None,
    };
    Ok(Model {
        presheaf,
        hamiltonians,
        weights,
        graphical,
    })
}

pub fn load_model(path: &Path) -> Result<Model> {
    parse_model(&read(path)?).map_err(|e| with_path(e, path))
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    }
}

/// Explicit poset/presheaf form. Two models describing the same presheaf,
/// energies and weights dump to the same bytes.
pub fn canonical_model_json(m: &Model) -> Value {
    let f = &m.presheaf;
    let p = f.poset();
    let leq: Vec<Value> = p
        .pairs()
        .iter()
        .map(|&(a, b)| json!([p.name(b), p.name(a)]))
        .collect();
    let mut sets = Map::new();
    for (a, name) in p.names().iter().enumerate() {
        sets.insert(name.clone(), json!(f.size(a)));
    }
    let mut maps = Map::new();
    for &(a, b) in p.pairs() {
        maps.insert(format!("{}->{}", p.name(a), p.name(b)), json!(f.map(a, b)));
    }
    let mut out = Map::new();
    out.insert("poset".into(), json!({"elements": p.names(), "leq": leq}));
    out.insert("presheaf".into(), json!({"sets": sets, "maps": maps}));
    out.insert("hamiltonians".into(), bundle_json(f, m.hamiltonians.bundle()));
    if let Some(w) = &m.weights {
        out.insert("weights".into(), bundle_json(f, w.bundle()));
    }
    Value::Object(out)
}

/// Graphical form when available, explicit form otherwise.
pub fn model_json(m: &Model) -> Value {
    let Some(spec) = &m.graphical else {
        return canonical_model_json(m);
    };
    let variables: Vec<Value> = spec
        .variables()
        .iter()
        .map(|(n, s)| json!({"name": n, "size": s}))
        .collect();
    let regions: Vec<Value> = spec
        .regions()
        .iter()
        .map(|r| json!(r.iter().map(|&v| spec.variables()[v].0.as_str()).collect::<Vec<_>>()))
        .collect();
    let mut out = Map::new();
    out.insert("graphical".into(), json!({"variables": variables, "regions": regions}));
    out.insert("hamiltonians".into(), bundle_json(&m.presheaf, m.hamiltonians.bundle()));
    if let Some(w) = &m.weights {
        out.insert("weights".into(), bundle_json(&m.presheaf, w.bundle()));
    }
    Value::Object(out)
}

/// Pretty JSON with a trailing newline.
pub fn to_pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("values serialize");
    s.push('\n');
    s
}

pub fn parse_beliefs(text: &str, f: &FiniteSetPresheaf) -> Result<FieldBundle> {
    parse_bundle(&parse_json(text)?, f, "beliefs", None)
}

pub fn load_beliefs(path: &Path, f: &FiniteSetPresheaf) -> Result<FieldBundle> {
    parse_beliefs(&read(path)?, f).map_err(|e| with_path(e, path))
}

/// `{variable: state}` into `(variable index, state)` pairs.
pub fn parse_evidence(text: &str, spec: &GraphicalSpec) -> Result<Vec<(usize, usize)>> {
    let v = parse_json(text)?;
    let obj = as_object(&v, "evidence")?;
    obj.iter()
        .map(|(k, s)| Ok((spec.variable_index(k)?, as_usize(s, &format!("evidence.{k}"))?)))
        .collect()
}

pub fn load_evidence(path: &Path, spec: &GraphicalSpec) -> Result<Vec<(usize, usize)>> {
    parse_evidence(&read(path)?, spec).map_err(|e| with_path(e, path))
}

/// A transformation file: optional source/target model paths (relative to
/// the file) and the components.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformFile {
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    components: Map<String, Value>,
}

pub fn load_transform_file(path: &Path) -> Result<TransformFile> {
    let v = parse_json(&read(path)?).map_err(|e| with_path(e, path))?;
    let obj = as_object(&v, "transform")?;
    let base = path.parent().unwrap_or(Path::new("."));
    let rel = |key: &str| -> Result<Option<PathBuf>> {
        obj.get(key)
            .map(|x| as_str(x, &format!("transform.{key}")).map(|s| base.join(s)))
            .transpose()
    };
    Ok(TransformFile {
        source: rel("source")?,
        target: rel("target")?,
        components: as_object(field(obj, "components", "transform")?, "transform.components")?.clone(),
    })
}

impl TransformFile {
    /// Builds and validates the transformation between two presheaves.
    pub fn build(&self, source: &FiniteSetPresheaf, target: &FiniteSetPresheaf) -> Result<NaturalTransformation> {
        let p = source.poset();
        if **p != **target.poset() {
            return Err(Error::PosetMismatch);
        }
        for key in self.components.keys() {
            p.index_of(key)?;
        }
        let mut comps = Vec::with_capacity(p.len());
        for (a, name) in p.names().iter().enumerate() {
            let c = match self.components.get(name) {
                Some(v) => as_array(v, &format!("transform.components.{name}"))?
                    .iter()
                    .map(|x| as_usize(x, &format!("transform.components.{name}")))
                    .collect::<Result<Vec<_>>>()?,
                None if source.size(a) == target.size(a) => (0..source.size(a)).collect(),
                None => {
                    return Err(Error::Validation(format!(
                        "transform.components: missing component for `{name}`"
                    )))
                }
            };
            comps.push(c);
        }
        NaturalTransformation::new(source.clone(), target.clone(), comps)
    }
}

pub fn transform_json(phi: &NaturalTransformation, source: &str, target: &str) -> Value {
    let mut comps = Map::new();
    for (a, name) in phi.source().poset().names().iter().enumerate() {
        comps.insert(name.clone(), json!(phi.component(a)));
    }
    json!({"source": source, "target": target, "components": comps})
}
