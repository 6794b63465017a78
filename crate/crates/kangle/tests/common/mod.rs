#![allow(dead_code)]

use kangle::dsl::{parse_expr, parse_immersion, BinOp, Expr, Func};
use kangle::jets::Jet;
use rand::Rng;

/// Random expression that stays smooth and finite on `[-1, 1]^nvars`.
pub fn smooth_expr<R: Rng>(rng: &mut R, depth: usize, nvars: usize) -> Expr {
    if depth == 0 || rng.gen_bool(0.25) {
        return if rng.gen_bool(0.6) {
            Expr::var(rng.gen_range(0..nvars))
        } else {
            Expr::num(rng.gen_range(-2.0..2.0))
        };
    }
    let sub = |rng: &mut R| smooth_expr(rng, depth - 1, nvars);
    match rng.gen_range(0..13) {
        0 => Expr::bin(BinOp::Add, sub(rng), sub(rng)),
        1 => Expr::bin(BinOp::Sub, sub(rng), sub(rng)),
        2 | 3 => Expr::bin(BinOp::Mul, sub(rng), sub(rng)),
        4 => {
            let den = Expr::bin(BinOp::Add, Expr::num(1.5), Expr::func(Func::Sin, sub(rng)));
            Expr::bin(BinOp::Div, sub(rng), den)
        }
        5 => Expr::pow(sub(rng), rng.gen_range(2..=3)),
        6 => Expr::func(Func::Sin, sub(rng)),
        7 => Expr::func(Func::Cos, sub(rng)),
        8 => Expr::func(Func::Atan, sub(rng)),
        9 => {
            let f = [Func::Exp, Func::Sinh, Func::Cosh][rng.gen_range(0..3)];
            Expr::func(f, Expr::func(Func::Atan, sub(rng)))
        }
        10 => Expr::func(
            Func::Log,
            Expr::bin(BinOp::Add, Expr::num(1.0), Expr::pow(sub(rng), 2)),
        ),
        11 => Expr::func(
            Func::Sqrt,
            Expr::bin(BinOp::Add, Expr::num(2.0), Expr::func(Func::Cos, sub(rng))),
        ),
        _ => Expr::neg(sub(rng)),
    }
}

pub fn seeds(point: &[f64], order: usize) -> Vec<Jet> {
    (0..point.len())
        .map(|i| Jet::seed(point.len(), order, point, i).unwrap())
        .collect()
}

/// Worst relative disagreement between every jet partial of order 1..=3 and
/// a fourth-order central difference of the next lower partial. Order one is
/// differenced from plain `f64` evaluation.
pub fn finite_difference_defect(e: &Expr, point: &[f64]) -> f64 {
    const H: f64 = 2e-4;
    let top = e.eval_jet(&seeds(point, 3)).unwrap();
    let lower = |beta: &[usize], p: &[f64]| -> f64 {
        let k: usize = beta.iter().sum();
        if k == 0 {
            e.eval_f64(p)
        } else {
            e.eval_jet(&seeds(p, k)).unwrap().extract(beta).unwrap()
        }
    };
    let mut worst: f64 = 0.0;
    for idx in 1..top.layout().len() {
        let alpha: Vec<usize> = top
            .layout()
            .multi_index(idx)
            .iter()
            .map(|&a| a as usize)
            .collect();
        let v = alpha.iter().position(|&a| a > 0).unwrap();
        let mut beta = alpha.clone();
        beta[v] -= 1;
        let at = |s: f64| {
            let mut p = point.to_vec();
            p[v] += s * H;
            lower(&beta, &p)
        };
        let (m2, m1, p1, p2) = (at(-2.0), at(-1.0), at(1.0), at(2.0));
        let fd = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * H);
        let exact = top.extract(&alpha).unwrap();
        let scale = [exact, fd, m2, m1, p1, p2]
            .iter()
            .fold(1e-300_f64, |m, x| m.max(x.abs()));
        worst = worst.max((exact - fd).abs() / scale);
    }
    worst
}

const FRAGMENTS: &[&str] = &[
    "n",
    "=",
    "1",
    "2",
    "3",
    ";",
    "ambient",
    "flat",
    "space_form",
    "(",
    ")",
    "[",
    "]",
    ",",
    "map",
    "periodic",
    "u1",
    "u2",
    "u3",
    "u4",
    "u0",
    "u99",
    "+",
    "-",
    "*",
    "/",
    "^",
    "sin",
    "cos",
    "log",
    "sqrt",
    "exp",
    "atan",
    "sinh",
    "cosh",
    "1.5",
    "1e3",
    "1e",
    ".5",
    "2.",
    " ",
    "\n",
    "\t",
    "#",
    "x",
    "é",
    "∞",
    "0x1",
    "--",
    "^^",
    "999999999999999999999",
];

pub fn fuzz_input<R: Rng>(rng: &mut R) -> String {
    let mut s = String::new();
    if rng.gen_bool(0.5) {
        s.push_str(
            [
                "n=1; ambient=flat; map=[",
                "n = 2;\nambient = space_form(1);\nmap = [",
                "",
            ][rng.gen_range(0..3)],
        );
    }
    for _ in 0..rng.gen_range(0..40) {
        if rng.gen_bool(0.9) {
            s.push_str(FRAGMENTS[rng.gen_range(0..FRAGMENTS.len())]);
        } else {
            s.push(char::from_u32(rng.gen_range(0..0x3000)).unwrap_or('?'));
        }
    }
    s
}

/// Line and column of the position one past the end of `text`.
fn end_position(text: &str) -> (usize, usize) {
    let line = text.matches('\n').count() + 1;
    let col = text.rsplit('\n').next().unwrap().chars().count() + 1;
    (line, col)
}

/// Parses `text` as a file and as an expression. Returns how many of the two
/// were rejected, or a description of a panic or a misplaced diagnostic.
pub fn check_fuzz_case(text: &str) -> Result<usize, String> {
    let result = std::panic::catch_unwind(|| (parse_immersion(text), parse_expr(text, None)));
    let (file, expr) = result.map_err(|_| format!("parser panicked on {text:?}"))?;
    let (last_line, last_col) = end_position(text);
    let mut rejected = 0;
    for err in [file.err(), expr.err()].into_iter().flatten() {
        rejected += 1;
        let bad = |what: &str| format!("{what} for {text:?}: {err}");
        if err.line < 1 || err.line > last_line {
            return Err(bad("line out of range"));
        }
        let width = text.split('\n').nth(err.line - 1).unwrap().chars().count();
        if err.column < 1
            || err.column > width + 1
            || (err.line == last_line && err.column > last_col)
        {
            return Err(bad("column out of range"));
        }
        if !err
            .to_string()
            .starts_with(&format!("line {}, column {}", err.line, err.column))
        {
            return Err(bad("message lacks its position"));
        }
    }
    Ok(rejected)
}
