//! LP-format text for the placement models.
//!
//! [`export`] writes the standard sections — objective, `Subject To`,
//! `Bounds`, `Generals`, `End` — with shortest-round-trip number
//! formatting, so a written model re-reads to the same f64s. [`parse`]
//! registers variables from the `Bounds` section before touching the
//! objective or constraints; since the writer lists every variable there
//! in creation order, export → parse → export is byte-identical and the
//! parsed model branches in the same order as the original.

use std::fmt::Write as _;

use thiserror::Error;

use super::model::{Cmp, MilpModel, VarKind};

#[derive(Debug, Error)]
pub enum LpTextError {
    #[error("LP text: {0}")]
    Syntax(String),
}

/// Widest line the writer produces before wrapping an expression.
const WRAP_COLUMN: usize = 76;

/// Renders a model in LP format.
pub fn export(model: &MilpModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "\\ Problem: {}", model.name);
    out.push_str("Minimize\n");
    let obj_terms: Vec<(String, f64)> = model
        .vars
        .iter()
        .filter(|v| v.obj != 0.0)
        .map(|v| (v.name.clone(), v.obj))
        .collect();
    write_expr(&mut out, "obj", &obj_terms, None);
    out.push_str("Subject To\n");
    for c in &model.constraints {
        let terms: Vec<(String, f64)> = c
            .terms
            .iter()
            .map(|(v, k)| (model.vars[v.0].name.clone(), *k))
            .collect();
        let tail = format!(
            "{} {:?}",
            match c.cmp {
                Cmp::Le => "<=",
                Cmp::Ge => ">=",
                Cmp::Eq => "=",
            },
            c.rhs
        );
        write_expr(&mut out, &c.name, &terms, Some(&tail));
    }
    out.push_str("Bounds\n");
    for v in &model.vars {
        if v.ub.is_infinite() {
            let _ = writeln!(out, " {:?} <= {}", v.lb, v.name);
        } else {
            let _ = writeln!(out, " {:?} <= {} <= {:?}", v.lb, v.name, v.ub);
        }
    }
    let generals: Vec<&str> = model
        .vars
        .iter()
        .filter(|v| v.kind == VarKind::Integer)
        .map(|v| v.name.as_str())
        .collect();
    if !generals.is_empty() {
        out.push_str("Generals\n");
        for name in generals {
            let _ = writeln!(out, " {name}");
        }
    }
    out.push_str("End\n");
    out
}

/// Writes `label: term + term - term [tail]`, wrapping long expressions.
fn write_expr(out: &mut String, label: &str, terms: &[(String, f64)], tail: Option<&str>) {
    let mut line = format!(" {label}:");
    let push = |line: &mut String, piece: String, out: &mut String| {
        if line.len() + 1 + piece.len() > WRAP_COLUMN && !line.ends_with(':') {
            out.push_str(line);
            out.push('\n');
            line.clear();
            line.push(' ');
        }
        line.push(' ');
        line.push_str(&piece);
    };
    if terms.is_empty() {
        push(&mut line, "0".to_string(), out);
    }
    for (i, (name, coeff)) in terms.iter().enumerate() {
        let mag = coeff.abs();
        let piece = if i == 0 && *coeff >= 0.0 {
            format!("{mag:?} {name}")
        } else if *coeff >= 0.0 {
            format!("+ {mag:?} {name}")
        } else {
            format!("- {mag:?} {name}")
        };
        push(&mut line, piece, out);
    }
    if let Some(tail) = tail {
        push(&mut line, tail.to_string(), out);
    }
    out.push_str(&line);
    out.push('\n');
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Plus,
    Minus,
    Colon,
    Cmp(Cmp),
}

/// Section keywords, matched case-insensitively on identifier tokens.
fn section_of(tok: &Tok) -> Option<&'static str> {
    let Tok::Ident(name) = tok else { return None };
    match name.to_ascii_lowercase().as_str() {
        "minimize" | "minimise" | "min" => Some("minimize"),
        "maximize" | "maximise" | "max" => Some("maximize"),
        "subject" | "st" | "s.t." => Some("subject"),
        "bounds" | "bound" => Some("bounds"),
        "generals" | "general" | "gen" | "integers" | "integer" => Some("generals"),
        "binary" | "binaries" | "bin" => Some("binary"),
        "end" => Some("end"),
        _ => None,
    }
}

fn tokenize(text: &str) -> Result<Vec<Tok>, LpTextError> {
    let mut toks = Vec::new();
    for raw_line in text.lines() {
        let line = match raw_line.find('\\') {
            Some(at) => &raw_line[..at],
            None => raw_line,
        };
        let bytes = line.as_bytes();
        let mut i = 0;
        while i < bytes.len() {
            let c = bytes[i] as char;
            if c.is_whitespace() {
                i += 1;
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric()
                        || bytes[i] == b'_'
                        || bytes[i] == b'.')
                {
                    i += 1;
                }
                toks.push(Tok::Ident(line[start..i].to_string()));
            } else if c.is_ascii_digit() || c == '.' {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.')
                {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    i += 1;
                    if i < bytes.len() && (bytes[i] == b'+' || bytes[i] == b'-') {
                        i += 1;
                    }
                    while i < bytes.len() && (bytes[i] as char).is_ascii_digit() {
                        i += 1;
                    }
                }
                let lit = &line[start..i];
                let num = lit
                    .parse::<f64>()
                    .map_err(|_| LpTextError::Syntax(format!("bad number {lit:?}")))?;
                toks.push(Tok::Num(num));
            } else {
                match c {
                    '+' => {
                        toks.push(Tok::Plus);
                        i += 1;
                    }
                    '-' => {
                        toks.push(Tok::Minus);
                        i += 1;
                    }
                    ':' => {
                        toks.push(Tok::Colon);
                        i += 1;
                    }
                    '<' | '>' | '=' => {
                        let cmp = match c {
                            '<' => Cmp::Le,
                            '>' => Cmp::Ge,
                            _ => Cmp::Eq,
                        };
                        i += 1;
                        if i < bytes.len() && bytes[i] == b'=' && cmp != Cmp::Eq {
                            i += 1;
                        }
                        toks.push(Tok::Cmp(cmp));
                    }
                    other => {
                        return Err(LpTextError::Syntax(format!(
                            "unexpected character {other:?}"
                        )));
                    }
                }
            }
        }
    }
    Ok(toks)
}

/// Reads a model from LP text.
pub fn parse(text: &str) -> Result<MilpModel, LpTextError> {
    let name = text
        .lines()
        .next()
        .and_then(|l| l.strip_prefix("\\ Problem: "))
        .unwrap_or("lp")
        .trim()
        .to_string();
    let toks = tokenize(text)?;

    // Slice out the sections: (kind, keyword index, content start).
    let mut sections: Vec<(&'static str, usize, usize)> = Vec::new();
    let mut i = 0;
    while i < toks.len() {
        if let Some(kind) = section_of(&toks[i]) {
            // "Subject To" eats the following "to".
            let skip = if kind == "subject" {
                match toks.get(i + 1) {
                    Some(Tok::Ident(w)) if w.eq_ignore_ascii_case("to") => 2,
                    _ => 1,
                }
            } else {
                1
            };
            sections.push((kind, i, i + skip));
            i += skip;
        } else {
            i += 1;
        }
    }
    let span = |want: &str| -> Option<(usize, usize)> {
        let at = sections.iter().position(|(kind, _, _)| *kind == want)?;
        let start = sections[at].2;
        let end = sections
            .get(at + 1)
            .map(|(_, kw, _)| *kw)
            .unwrap_or(toks.len());
        Some((start, end))
    };
    if span("maximize").is_some() {
        return Err(LpTextError::Syntax(
            "maximization is not supported".to_string(),
        ));
    }

    let mut model = MilpModel::new(&name);
    let mut order: Vec<(String, f64, f64)> = Vec::new();
    let mut known = std::collections::BTreeMap::<String, usize>::new();
    let mut register = |name: &str,
                        bounds: Option<(f64, f64)>,
                        order: &mut Vec<(String, f64, f64)>|
     -> usize {
        if let Some(&at) = known.get(name) {
            if let Some((lb, ub)) = bounds {
                order[at].1 = lb;
                order[at].2 = ub;
            }
            return at;
        }
        let (lb, ub) = bounds.unwrap_or((0.0, f64::INFINITY));
        order.push((name.to_string(), lb, ub));
        known.insert(name.to_string(), order.len() - 1);
        order.len() - 1
    };

    // Bounds first: this pins variable order for round-tripping.
    if let Some((start, end)) = span("bounds") {
        let mut i = start;
        while i < end {
            match &toks[i] {
                Tok::Num(lb) => {
                    // num <= name [<= num]
                    let (Some(Tok::Cmp(Cmp::Le)), Some(Tok::Ident(name))) =
                        (toks.get(i + 1), toks.get(i + 2))
                    else {
                        return Err(LpTextError::Syntax(
                            "malformed bound entry".to_string(),
                        ));
                    };
                    let mut ub = f64::INFINITY;
                    let mut step = 3;
                    if let (Some(Tok::Cmp(Cmp::Le)), Some(Tok::Num(u))) =
                        (toks.get(i + 3), toks.get(i + 4))
                    {
                        ub = *u;
                        step = 5;
                    }
                    register(name, Some((*lb, ub)), &mut order);
                    i += step;
                }
                Tok::Ident(name) => {
                    // name <= num | name >= num | name = num | name free
                    match (toks.get(i + 1), toks.get(i + 2)) {
                        (Some(Tok::Cmp(cmp)), Some(Tok::Num(v))) => {
                            let bounds = match cmp {
                                Cmp::Le => (0.0, *v),
                                Cmp::Ge => (*v, f64::INFINITY),
                                Cmp::Eq => (*v, *v),
                            };
                            register(name, Some(bounds), &mut order);
                            i += 3;
                        }
                        (Some(Tok::Ident(word)), _)
                            if word.eq_ignore_ascii_case("free") =>
                        {
                            register(
                                name,
                                Some((f64::NEG_INFINITY, f64::INFINITY)),
                                &mut order,
                            );
                            i += 2;
                        }
                        _ => {
                            return Err(LpTextError::Syntax(
                                "malformed bound entry".to_string(),
                            ))
                        }
                    }
                }
                other => {
                    return Err(LpTextError::Syntax(format!(
                        "unexpected token in bounds: {other:?}"
                    )));
                }
            }
        }
    }

    // Linear expression, consumed until a comparison or the slice ends.
    struct ExprEnd {
        terms: Vec<(String, f64)>,
        at: usize,
    }
    let read_expr = |toks: &[Tok],
                     mut i: usize,
                     end: usize|
     -> Result<ExprEnd, LpTextError> {
        let mut terms = Vec::new();
        let mut sign = 1.0;
        let mut coeff: Option<f64> = None;
        while i < end {
            match &toks[i] {
                Tok::Plus => {
                    sign = 1.0;
                    i += 1;
                }
                Tok::Minus => {
                    sign = -sign;
                    i += 1;
                }
                Tok::Num(v) => {
                    if coeff.is_some() {
                        return Err(LpTextError::Syntax(
                            "two numbers in a row in an expression".to_string(),
                        ));
                    }
                    coeff = Some(*v);
                    i += 1;
                }
                Tok::Ident(name) => {
                    terms.push((name.clone(), sign * coeff.unwrap_or(1.0)));
                    sign = 1.0;
                    coeff = None;
                    i += 1;
                }
                Tok::Cmp(_) | Tok::Colon => break,
            }
        }
        if let Some(c) = coeff {
            if c != 0.0 {
                return Err(LpTextError::Syntax(format!(
                    "dangling constant {c:?} in expression"
                )));
            }
        }
        Ok(ExprEnd { terms, at: i })
    };

    let mut obj: Vec<(String, f64)> = Vec::new();
    if let Some((start, end)) = span("minimize") {
        // "label:" is optional for the objective row.
        let mut i = start;
        if let (Some(Tok::Ident(_)), Some(Tok::Colon)) = (toks.get(i), toks.get(i + 1)) {
            i += 2;
        }
        let expr = read_expr(&toks, i, end)?;
        if expr.at != end {
            return Err(LpTextError::Syntax(
                "objective may not contain comparisons".to_string(),
            ));
        }
        obj = expr.terms;
    }

    struct ParsedCon {
        name: String,
        terms: Vec<(String, f64)>,
        cmp: Cmp,
        rhs: f64,
    }
    let mut cons: Vec<ParsedCon> = Vec::new();
    if let Some((start, end)) = span("subject") {
        let mut i = start;
        let mut anon = 0usize;
        while i < end {
            let name = match (toks.get(i), toks.get(i + 1)) {
                (Some(Tok::Ident(n)), Some(Tok::Colon)) => {
                    i += 2;
                    n.clone()
                }
                _ => {
                    anon += 1;
                    format!("c{anon}")
                }
            };
            let expr = read_expr(&toks, i, end)?;
            i = expr.at;
            let Some(Tok::Cmp(cmp)) = toks.get(i) else {
                return Err(LpTextError::Syntax(format!(
                    "constraint {name} has no comparison"
                )));
            };
            i += 1;
            // A negative right-hand side arrives as a sign token.
            let mut rhs_sign = 1.0;
            while let Some(tok) = toks.get(i) {
                match tok {
                    Tok::Minus => rhs_sign = -rhs_sign,
                    Tok::Plus => {}
                    _ => break,
                }
                i += 1;
            }
            let Some(Tok::Num(rhs)) = toks.get(i) else {
                return Err(LpTextError::Syntax(format!(
                    "constraint {name} has no right-hand side"
                )));
            };
            i += 1;
            cons.push(ParsedCon {
                name,
                terms: expr.terms,
                cmp: *cmp,
                rhs: rhs_sign * rhs,
            });
        }
    }

    for (name, _) in &obj {
        register(name, None, &mut order);
    }
    for c in &cons {
        for (name, _) in &c.terms {
            register(name, None, &mut order);
        }
    }

    let mut integer = std::collections::BTreeSet::<String>::new();
    for kind in ["generals", "binary"] {
        if let Some((start, end)) = span(kind) {
            for tok in &toks[start..end] {
                let Tok::Ident(name) = tok else {
                    return Err(LpTextError::Syntax(format!(
                        "unexpected token in {kind}: {tok:?}"
                    )));
                };
                let at = register(name, None, &mut order);
                integer.insert(name.clone());
                if kind == "binary" {
                    order[at].1 = 0.0;
                    order[at].2 = 1.0;
                }
            }
        }
    }

    let obj_of = |name: &str| -> f64 {
        obj.iter()
            .filter(|(n, _)| n == name)
            .map(|(_, c)| *c)
            .sum()
    };
    for (name, lb, ub) in &order {
        let kind = if integer.contains(name) {
            VarKind::Integer
        } else {
            VarKind::Continuous
        };
        model
            .add_var(name.clone(), kind, *lb, *ub, obj_of(name))
            .map_err(|e| LpTextError::Syntax(e.to_string()))?;
    }
    for c in cons {
        let terms: Vec<_> = c
            .terms
            .iter()
            .map(|(name, coeff)| (model.var(name).expect("registered above"), *coeff))
            .collect();
        model.add_con(c.name, terms, c.cmp, c.rhs);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::model::build_model;
    use crate::exact::{solve_generic, BbConfig};
    use crate::instance::PlacementMode;

    #[test]
    fn export_parse_export_is_byte_identical() {
        let inst = crate::exact::tests::toy(PlacementMode::Foa);
        let (milp, _) = build_model(&inst).unwrap();
        let text = export(&milp);
        let back = parse(&text).unwrap();
        assert_eq!(export(&back), text);
    }

    #[test]
    fn parsed_models_solve_identically() {
        let inst = crate::exact::tests::toy(PlacementMode::Ca);
        let (milp, _) = build_model(&inst).unwrap();
        let back = parse(&export(&milp)).unwrap();
        let cfg = BbConfig::default();
        let (a, xs, _) = solve_generic(&milp, &cfg).unwrap();
        let (b, ys, _) = solve_generic(&back, &cfg).unwrap();
        assert_eq!(a, b, "objectives diverged: {a} vs {b}");
        assert_eq!(xs, ys);
    }

    #[test]
    fn tolerates_hand_written_text() {
        let text = "\
\\ scribbles
Minimize
 cost: 2 x + 3.5 y
Subject To
 one: x + y >= 1
 two: x - y <= 0.5
Bounds
 0 <= x <= 4
 0 <= y <= 4
Generals
 x
 y
End
";
        let m = parse(text).unwrap();
        assert_eq!(m.vars.len(), 2);
        assert_eq!(m.constraints.len(), 2);
        let (obj, values, _) = solve_generic(&m, &BbConfig::default()).unwrap();
        // x = y = 0.5 is barred by integrality; x = 0, y = 1 costs 3.5.
        assert!((obj - 3.5).abs() < 1e-9, "objective {obj}");
        assert_eq!(values, [0.0, 1.0]);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse("Minimize\n obj: 1 x\nSubject To\n c: x ?\nEnd\n").is_err());
        assert!(parse("Maximize\n obj: x\nEnd\n").is_err());
    }
}
