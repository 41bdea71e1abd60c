//! CPLEX-style LP text export/import for cross-checking programs against
//! external solvers.
//!
//! Supported subset: `Minimize` with linear terms, an optional quadratic
//! block `[ ... ] / 2` and a constant; `Subject To` rows with `<=`, `>=`, `=`;
//! `Bounds` with `free`, one- and two-sided bounds; `End`. Variables absent
//! from `Bounds` default to `[0, +inf)`.


use super::{LinearRow, ProgramDescription};
use crate::error::{Error, Result};

fn fmt_num(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        // shortest representation that round-trips
        format!("{v:?}")
    }
}

fn sanitize(name: &str) -> String {
    let mut s: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' { c } else { '_' })
        .collect();
    if s.is_empty() || s.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
        s.insert(0, '_');
    }
    s
}

fn unique_names(raw: &[String], prefix: &str) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    raw.iter()
        .enumerate()
        .map(|(i, n)| {
            let mut s = if n.is_empty() { format!("{prefix}{i}") } else { sanitize(n) };
            if !seen.insert(s.clone()) {
                s = format!("{s}__{i}");
                seen.insert(s.clone());
            }
            s
        })
        .collect()
}

struct LineWriter {
    out: String,
    line_len: usize,
}

impl LineWriter {
    fn push(&mut self, tok: &str) {
        if self.line_len + tok.len() > 200 {
            self.out.push_str("\n   ");
            self.line_len = 3;
        }
        self.out.push(' ');
        self.out.push_str(tok);
        self.line_len += tok.len() + 1;
    }

    fn newline(&mut self) {
        self.out.push('\n');
        self.line_len = 0;
    }
}

fn signed(c: f64) -> (char, f64) {
    if c < 0.0 {
        ('-', -c)
    } else {
        ('+', c)
    }
}

pub fn export(program: &ProgramDescription) -> String {
    let names = unique_names(&program.names, "x");
    let row_names: Vec<String> = {
        let raw: Vec<String> = program
            .equalities
            .iter()
            .chain(&program.inequalities)
            .map(|r| r.name.clone())
            .collect();
        unique_names(&raw, "c")
    };
    let mut w = LineWriter {
        out: String::from("\\ exported by ddrmpc\nMinimize\n obj:"),
        line_len: 5,
    };
    let mut any = false;
    for (i, q) in program.linear.iter().enumerate() {
        if *q != 0.0 {
            let (s, a) = signed(*q);
            w.push(&format!("{s} {} {}", fmt_num(a), names[i]));
            any = true;
        }
    }
    if !program.quadratic.is_empty() {
        w.push("+ [");
        for &(i, j, p) in &program.quadratic {
            if i == j {
                let (s, a) = signed(p);
                w.push(&format!("{s} {} {} ^ 2", fmt_num(a), names[i]));
            } else {
                let (s, a) = signed(2.0 * p);
                w.push(&format!("{s} {} {} * {}", fmt_num(a), names[i], names[j]));
            }
        }
        w.push("] / 2");
        any = true;
    }
    if program.constant != 0.0 || !any {
        let (s, a) = signed(program.constant);
        w.push(&format!("{s} {}", fmt_num(a)));
    }
    w.newline();
    w.out.push_str("Subject To\n");
    let rows = program
        .equalities
        .iter()
        .map(|r| (r, "="))
        .chain(program.inequalities.iter().map(|r| (r, "<=")));
    for ((r, op), name) in rows.zip(&row_names) {
        w.out.push(' ');
        w.out.push_str(name);
        w.out.push(':');
        w.line_len = name.len() + 2;
        if r.coefs.is_empty() {
            // LP rows need at least one variable
            w.push(&format!("0 {}", names.first().map(String::as_str).unwrap_or("x0")));
        }
        for &(i, c) in &r.coefs {
            let (s, a) = signed(c);
            w.push(&format!("{s} {} {}", fmt_num(a), names[i]));
        }
        w.push(&format!("{op} {}", fmt_num(r.rhs)));
        w.newline();
    }
    w.out.push_str("Bounds\n");
    for (i, n) in names.iter().enumerate() {
        let (lo, hi) = (program.lower[i], program.upper[i]);
        let line = if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            format!(" {n} free\n")
        } else if lo == hi {
            format!(" {n} = {}\n", fmt_num(lo))
        } else {
            format!(" {} <= {n} <= {}\n", fmt_num(lo), fmt_num(hi))
        };
        w.out.push_str(&line);
    }
    w.out.push_str("End\n");
    w.out
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(String),
}

fn tokenize(line: &str, lineno: usize) -> Result<Vec<Tok>> {
    let line = match line.find('\\') {
        Some(i) => &line[..i],
        None => line,
    };
    let chars: Vec<char> = line.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len()
                && (chars[i].is_ascii_digit()
                    || chars[i] == '.'
                    || ((chars[i] == 'e' || chars[i] == 'E')
                        && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit() || *d == '+' || *d == '-')))
            {
                if chars[i] == 'e' || chars[i] == 'E' {
                    i += 2;
                } else {
                    i += 1;
                }
            }
            let s: String = chars[start..i].iter().collect();
            let v = s.parse::<f64>().map_err(|_| Error::LpFormat {
                line: lineno,
                msg: format!("bad number {s:?}"),
            })?;
            out.push(Tok::Num(v));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
                i += 1;
            }
            let s: String = chars[start..i].iter().collect();
            match s.to_ascii_lowercase().as_str() {
                "inf" | "infinity" => out.push(Tok::Num(f64::INFINITY)),
                _ => out.push(Tok::Ident(s)),
            }
        } else if c == '<' || c == '>' || c == '=' {
            let mut op = String::from(c);
            if chars.get(i + 1) == Some(&'=') {
                op.push('=');
                i += 1;
            }
            i += 1;
            let op = match op.as_str() {
                "<" | "=<" => "<=".to_string(),
                ">" | "=>" => ">=".to_string(),
                "==" => "=".to_string(),
                o => o.to_string(),
            };
            out.push(Tok::Op(op));
        } else if "+-*^[]/:".contains(c) {
            out.push(Tok::Op(c.to_string()));
            i += 1;
        } else {
            return Err(Error::LpFormat {
                line: lineno,
                msg: format!("unexpected character {c:?}"),
            });
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Objective,
    Constraints,
    Bounds,
    End,
}

fn section_keyword(line: &str) -> Option<Section> {
    match line.trim().to_ascii_lowercase().as_str() {
        "minimize" | "minimise" | "minimum" | "min" => Some(Section::Objective),
        "subject to" | "such that" | "st" | "s.t." | "st." => Some(Section::Constraints),
        "bounds" | "bound" => Some(Section::Bounds),
        "end" => Some(Section::End),
        _ => None,
    }
}

struct Vars {
    names: Vec<String>,
    index: std::collections::HashMap<String, usize>,
}

impl Vars {
    fn get(&mut self, n: &str) -> usize {
        if let Some(&i) = self.index.get(n) {
            return i;
        }
        self.names.push(n.to_string());
        self.index.insert(n.to_string(), self.names.len() - 1);
        self.names.len() - 1
    }
}

struct Parsed {
    linear: Vec<(usize, f64)>,
    quad: Vec<(usize, usize, f64)>,
    constant: f64,
}

/// Parse `sign? coef? (var | var ^ 2 | var * var)` sequences. Quadratic terms
/// only inside `[ ]`.
fn parse_expr(toks: &[Tok], vars: &mut Vars, line: usize) -> Result<Parsed> {
    let err = |msg: String| Error::LpFormat { line, msg };
    let mut out = Parsed {
        linear: Vec::new(),
        quad: Vec::new(),
        constant: 0.0,
    };
    let mut i = 0;
    let mut in_quad = false;
    while i < toks.len() {
        let mut sign = 1.0;
        while let Some(Tok::Op(o)) = toks.get(i) {
            match o.as_str() {
                "+" => {}
                "-" => sign = -sign,
                "[" => in_quad = true,
                "]" => {
                    in_quad = false;
                    // expect "/ 2"
                    match (toks.get(i + 1), toks.get(i + 2)) {
                        (Some(Tok::Op(s)), Some(Tok::Num(d))) if s == "/" && *d == 2.0 => i += 2,
                        _ => return Err(err("quadratic block must end with '] / 2'".into())),
                    }
                }
                o => return Err(err(format!("unexpected operator {o:?}"))),
            }
            i += 1;
        }
        if i >= toks.len() {
            break;
        }
        let mut coef = sign;
        let mut had_num = false;
        if let Tok::Num(v) = toks[i] {
            coef *= v;
            had_num = true;
            i += 1;
        }
        match toks.get(i) {
            Some(Tok::Ident(name)) => {
                let a = vars.get(name);
                i += 1;
                match toks.get(i) {
                    Some(Tok::Op(o)) if o == "^" => {
                        if !in_quad || toks.get(i + 1) != Some(&Tok::Num(2.0)) {
                            return Err(err("only '^ 2' inside a quadratic block is supported".into()));
                        }
                        out.quad.push((a, a, coef));
                        i += 2;
                    }
                    Some(Tok::Op(o)) if o == "*" => {
                        let Some(Tok::Ident(n2)) = toks.get(i + 1) else {
                            return Err(err("expected variable after '*'".into()));
                        };
                        if !in_quad {
                            return Err(err("product outside quadratic block".into()));
                        }
                        let b = vars.get(n2);
                        out.quad.push((a, b, coef));
                        i += 2;
                    }
                    _ => {
                        if in_quad {
                            return Err(err("linear term inside quadratic block".into()));
                        }
                        out.linear.push((a, coef));
                    }
                }
            }
            _ if had_num => out.constant += coef,
            Some(t) => return Err(err(format!("unexpected token {t:?}"))),
            None => return Err(err("dangling sign".into())),
        }
    }
    if in_quad {
        return Err(err("unterminated quadratic block".into()));
    }
    Ok(out)
}

pub fn import(text: &str) -> Result<ProgramDescription> {
    let mut vars = Vars {
        names: Vec::new(),
        index: Default::default(),
    };
    let mut section = Section::None;
    // gather logical statements: objective is one statement; each constraint
    // starts with `name:` or follows a completed row.
    let mut obj_toks: Vec<Tok> = Vec::new();
    let mut obj_line = 0;
    let mut rows: Vec<(usize, Vec<Tok>)> = Vec::new();
    let mut bounds: Vec<(usize, Vec<Tok>)> = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let lineno = k + 1;
        if let Some(s) = section_keyword(raw) {
            section = s;
            continue;
        }
        let toks = tokenize(raw, lineno)?;
        if toks.is_empty() {
            continue;
        }
        match section {
            Section::None => {
                return Err(Error::LpFormat {
                    line: lineno,
                    msg: "content before Minimize".into(),
                })
            }
            Section::End => break,
            Section::Objective => {
                if obj_toks.is_empty() {
                    obj_line = lineno;
                }
                obj_toks.extend(toks);
            }
            Section::Constraints => {
                let continues = match rows.last() {
                    Some((_, t)) => !t.iter().any(|x| matches!(x, Tok::Op(o) if o == "<=" || o == ">=" || o == "="))
                        || matches!(t.last(), Some(Tok::Op(_))),
                    None => false,
                };
                if continues {
                    rows.last_mut().expect("checked").1.extend(toks);
                } else {
                    rows.push((lineno, toks));
                }
            }
            Section::Bounds => bounds.push((lineno, toks)),
        }
    }
    if section != Section::End {
        return Err(Error::LpFormat {
            line: text.lines().count(),
            msg: "missing End".into(),
        });
    }

    // objective
    let strip_label = |toks: &[Tok]| -> (Option<String>, usize) {
        match (toks.first(), toks.get(1)) {
            (Some(Tok::Ident(n)), Some(Tok::Op(c))) if c == ":" => (Some(n.clone()), 2),
            _ => (None, 0),
        }
    };
    let (_, skip) = strip_label(&obj_toks);
    let obj = parse_expr(&obj_toks[skip..], &mut vars, obj_line)?;

    let mut equalities = Vec::new();
    let mut inequalities = Vec::new();
    for (n, (lineno, toks)) in rows.iter().enumerate() {
        let (label, skip) = strip_label(toks);
        let toks = &toks[skip..];
        let op_pos = toks
            .iter()
            .position(|t| matches!(t, Tok::Op(o) if o == "<=" || o == ">=" || o == "="))
            .ok_or_else(|| Error::LpFormat {
                line: *lineno,
                msg: "constraint without relational operator".into(),
            })?;
        let lhs = parse_expr(&toks[..op_pos], &mut vars, *lineno)?;
        let rhs = parse_expr(&toks[op_pos + 1..], &mut vars, *lineno)?;
        if !lhs.quad.is_empty() || !rhs.quad.is_empty() || !rhs.linear.is_empty() {
            return Err(Error::LpFormat {
                line: *lineno,
                msg: "only linear rows with a constant right-hand side are supported".into(),
            });
        }
        let name = label.unwrap_or_else(|| format!("c{n}"));
        let rhs_v = rhs.constant - lhs.constant;
        let mut coefs = lhs.linear;
        coefs.retain(|(_, c)| *c != 0.0);
        let Tok::Op(op) = &toks[op_pos] else { unreachable!() };
        match op.as_str() {
            "=" => equalities.push(LinearRow { name, coefs, rhs: rhs_v }),
            "<=" => inequalities.push(LinearRow { name, coefs, rhs: rhs_v }),
            _ => inequalities.push(LinearRow {
                name,
                coefs: coefs.into_iter().map(|(i, c)| (i, -c)).collect(),
                rhs: -rhs_v,
            }),
        }
    }

    let mut bound_specs = Vec::new();
    for (lineno, toks) in &bounds {
        let err = |msg: &str| Error::LpFormat {
            line: *lineno,
            msg: msg.to_string(),
        };
        // fold unary minus into numbers
        let mut t: Vec<Tok> = Vec::new();
        let mut neg = false;
        for tok in toks {
            match tok {
                Tok::Op(o) if o == "-" => neg = !neg,
                Tok::Op(o) if o == "+" => {}
                Tok::Num(v) => {
                    t.push(Tok::Num(if neg { -v } else { *v }));
                    neg = false;
                }
                other => t.push(other.clone()),
            }
        }
        let op = |k: usize| match t.get(k) {
            Some(Tok::Op(o)) => Some(o.as_str()),
            _ => None,
        };
        match t.as_slice() {
            [Tok::Ident(n), Tok::Ident(f)] if f.eq_ignore_ascii_case("free") => {
                bound_specs.push((vars.get(n), f64::NEG_INFINITY, f64::INFINITY, true, true))
            }
            [Tok::Num(lo), _, Tok::Ident(n), _, Tok::Num(hi)] if op(1) == Some("<=") && op(3) == Some("<=") => {
                bound_specs.push((vars.get(n), *lo, *hi, true, true))
            }
            [Tok::Ident(n), _, Tok::Num(v)] => {
                let i = vars.get(n);
                match op(1) {
                    Some("<=") => bound_specs.push((i, 0.0, *v, false, true)),
                    Some(">=") => bound_specs.push((i, *v, f64::INFINITY, true, false)),
                    Some("=") => bound_specs.push((i, *v, *v, true, true)),
                    _ => return Err(err("bad bound")),
                }
            }
            [Tok::Num(v), _, Tok::Ident(n)] => {
                let i = vars.get(n);
                match op(1) {
                    Some("<=") => bound_specs.push((i, *v, f64::INFINITY, true, false)),
                    Some(">=") => bound_specs.push((i, 0.0, *v, false, true)),
                    _ => return Err(err("bad bound")),
                }
            }
            _ => return Err(err("unsupported bound syntax")),
        }
    }

    let n = vars.names.len();
    let mut lower = vec![0.0; n];
    let mut upper = vec![f64::INFINITY; n];
    for (i, lo, hi, set_lo, set_hi) in bound_specs {
        if set_lo {
            lower[i] = lo;
        }
        if set_hi {
            upper[i] = hi;
        }
    }
    let mut linear = vec![0.0; n];
    for (i, c) in obj.linear {
        linear[i] += c;
    }
    let mut qmap: std::collections::HashMap<(usize, usize), f64> = Default::default();
    for (a, b, c) in obj.quad {
        // the block holds xᵀPx, so an off-diagonal term c·x_a·x_b carries P_ab = c/2
        let (i, j) = (a.min(b), a.max(b));
        let v = if i == j { c } else { c / 2.0 };
        *qmap.entry((i, j)).or_insert(0.0) += v;
    }
    let mut quadratic: Vec<(usize, usize, f64)> = qmap
        .into_iter()
        .filter(|(_, v)| *v != 0.0)
        .map(|((i, j), v)| (i, j, v))
        .collect();
    quadratic.sort_by_key(|&(i, j, _)| (i, j));
    let program = ProgramDescription {
        names: vars.names,
        lower,
        upper,
        equalities,
        inequalities,
        quadratic,
        linear,
        constant: obj.constant,
    };
    program.validate()?;
    Ok(program)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{solve, LinExpr, ProgramBuilder};

    fn sample() -> ProgramDescription {
        let mut b = ProgramBuilder::new();
        let x = b.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
        let y = b.add_var("y", -1.0, 4.0);
        let z = b.add_var("z", 0.0, f64::INFINITY);
        b.add_le("r1", LinExpr::sum([(x, 1.0), (y, 2.0)]), 3.0);
        b.add_ge("r2", LinExpr::sum([(x, 1.0), (z, -1.0)]), -2.5);
        b.add_eq("r3", LinExpr::sum([(y, 1.0), (z, 1.0)]), 1.25);
        b.add_squared(&(LinExpr::var(x) - LinExpr::var(y) + LinExpr::constant(0.5)), 1.5);
        b.add_linear_objective(&LinExpr::sum([(z, 0.3)]));
        b.build()
    }

    #[test]
    fn round_trip_same_optimum() {
        let p = sample();
        let text = export(&p);
        let q = import(&text).unwrap();
        assert_eq!(q.num_vars(), 3);
        let (a, b) = (solve(&p).unwrap(), solve(&q).unwrap());
        assert!(a.is_optimal() && b.is_optimal());
        assert!((a.objective - b.objective).abs() < 1e-8, "{} vs {}", a.objective, b.objective);
        // same objective function pointwise
        for x in [[0.1, 0.2, 0.3], [-1.0, 2.0, 5.0]] {
            assert!((p.objective(&x) - q.objective(&x)).abs() < 1e-12);
        }
    }

    #[test]
    fn parses_handwritten_file() {
        let text = "\\ test\nMinimize\n obj: x + 2 y\n   + [ 2 x ^ 2 ] / 2\nSubject To\n c1: x + y >= 1\n c2: x - y\n   <= 5\nBounds\n -3 <= x <= 3\n y free\nEnd\n";
        let p = import(text).unwrap();
        assert_eq!(p.num_vars(), 2);
        assert_eq!(p.inequalities.len(), 2);
        assert_eq!(p.inequalities[1].coefs, vec![(0, 1.0), (1, -1.0)]);
        assert_eq!(p.lower, vec![-3.0, f64::NEG_INFINITY]);
        assert_eq!(p.quadratic, vec![(0, 0, 2.0)]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = import("Minimize\n obj: x\nSubject To\n c1: x ? 1\nEnd\n").unwrap_err();
        assert!(err.to_string().contains("line 4"), "{err}");
        assert!(import("Minimize\n obj: x\n").is_err());
    }
}
