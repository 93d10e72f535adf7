//! Machine-readable trace output: CSV with a fixed column order and a
//! small deterministic JSON writer. All numbers print with 17 significant
//! digits; output bytes are a pure function of the data.

use crate::dynamics::{equation_class, IterationTrace};
use crate::statefile::fmt17;

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => fmt17(x),
        _ => "nan".to_string(),
    }
}

fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        fmt17(x)
    } else {
        "nan".to_string()
    }
}

/// Fixed-order CSV of a run trace; twisted runs append one column.
pub fn trace_csv(trace: &IterationTrace) -> String {
    let mut out = String::from(
        "k,tau,sup_eta,inf_eta,sup_psi,inf_psi,E0,E1,F_mu,I,J,min_ricci_ratio,newton_iters,residual",
    );
    if trace.twisted {
        out.push_str(",E0_twisted");
    }
    out.push('\n');
    for r in &trace.records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.k,
            fmt_num(trace.tau),
            fmt_num(r.sup_eta),
            fmt_num(r.inf_eta),
            fmt_num(r.sup_psi),
            fmt_num(r.inf_psi),
            fmt_num(r.e0),
            fmt_opt(r.e1),
            fmt_num(r.f_mu),
            fmt_num(r.i),
            fmt_num(r.j),
            fmt_num(r.min_ricci_ratio),
            r.newton_iters,
            fmt_num(r.residual),
        ));
        if trace.twisted {
            out.push(',');
            out.push_str(&fmt_opt(r.e0_twisted));
        }
        out.push('\n');
    }
    out
}

/// Minimal ordered JSON value; field order is the insertion order, so
/// output is deterministic.
#[derive(Clone, Debug)]
pub enum Json {
    Null,
    Bool(bool),
    Int(i64),
    Num(f64),
    Str(String),
    Arr(Vec<Json>),
    Obj(Vec<(String, Json)>),
}

impl Json {
    pub fn obj() -> Json {
        Json::Obj(Vec::new())
    }

    pub fn push(&mut self, key: &str, value: Json) {
        if let Json::Obj(fields) = self {
            fields.push((key.to_string(), value));
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        self.write(&mut s);
        s
    }

    fn write(&self, out: &mut String) {
        match self {
            Json::Null => out.push_str("null"),
            Json::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
            Json::Int(i) => out.push_str(&i.to_string()),
            Json::Num(x) => {
                if x.is_finite() {
                    out.push_str(&fmt17(*x));
                } else {
                    out.push_str("null");
                }
            }
            Json::Str(s) => {
                out.push('"');
                for ch in s.chars() {
                    match ch {
                        '"' => out.push_str("\\\""),
                        '\\' => out.push_str("\\\\"),
                        '\n' => out.push_str("\\n"),
                        c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
                        c => out.push(c),
                    }
                }
                out.push('"');
            }
            Json::Arr(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    item.write(out);
                }
                out.push(']');
            }
            Json::Obj(fields) => {
                out.push('{');
                for (i, (k, v)) in fields.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    Json::Str(k.clone()).write(out);
                    out.push(':');
                    v.write(out);
                }
                out.push('}');
            }
        }
    }
}

fn opt_num(v: Option<f64>) -> Json {
    match v {
        Some(x) => Json::Num(x),
        None => Json::Null,
    }
}

/// JSON summary of a run trace. `mobius_distance` is the line-search
/// distance to the dilation orbit, reported for sphere runs where the
/// fixed point is only unique modulo automorphisms.
pub fn trace_json(
    trace: &IterationTrace,
    command: &str,
    mu: f64,
    mobius_distance: Option<f64>,
) -> Json {
    let mut root = Json::obj();
    root.push("command", Json::Str(command.to_string()));
    root.push("tau", Json::Num(trace.tau));
    root.push("verdict", Json::Str(trace.verdict.as_str().to_string()));
    root.push(
        "converged",
        Json::Bool(trace.verdict == crate::dynamics::Verdict::Converged),
    );
    root.push("steps", Json::Int(trace.records.len() as i64));
    let a = if trace.tau > 0.0 { 1.0 / trace.tau - mu } else { f64::NAN };
    root.push("equation_class", Json::Str(equation_class(a).to_string()));
    let mut fin = Json::obj();
    if let Some(last) = trace.records.last() {
        fin.push("E0", Json::Num(last.e0));
        fin.push("E1", opt_num(last.e1));
        fin.push("F_mu", Json::Num(last.f_mu));
        fin.push("I", Json::Num(last.i));
        fin.push("J", Json::Num(last.j));
        fin.push("E0_twisted", opt_num(last.e0_twisted));
        fin.push("sup_eta", Json::Num(last.sup_eta));
        fin.push("min_ricci_ratio", Json::Num(last.min_ricci_ratio));
    }
    root.push("final", fin);
    root.push(
        "final_density_deviation",
        Json::Num(trace.final_state.sup_density_deviation()),
    );
    root.push("mobius_orbit_distance", opt_num(mobius_distance));
    root.push("rate_estimate", opt_num(trace.rate_estimate()));
    let mut flags = Json::obj();
    flags.push("nonstandard_branch", Json::Bool(trace.nonstandard_branch));
    flags.push("twisted", Json::Bool(trace.twisted));
    root.push("branch_flags", flags);
    root.push(
        "failure",
        match &trace.failure {
            Some(msg) => Json::Str(msg.clone()),
            None => Json::Null,
        },
    );
    root
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_writer_escapes_and_orders() {
        let mut j = Json::obj();
        j.push("b", Json::Int(2));
        j.push("a", Json::Str("x\"y\\z\n".into()));
        j.push("c", Json::Arr(vec![Json::Bool(true), Json::Null, Json::Num(0.5)]));
        assert_eq!(
            j.render(),
            r#"{"b":2,"a":"x\"y\\z\n","c":[true,null,5.0000000000000000e-1]}"#
        );
    }

    #[test]
    fn seventeen_digit_round_trip() {
        for x in [0.1, 1.0 / 3.0, 2.0_f64.sqrt(), -1.2345e-13] {
            let s = fmt17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
        }
    }
}
