use super::{BinOp, Expr, ImmersionSpec};

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Bin(BinOp::Add | BinOp::Sub, ..) => 1,
        Expr::Bin(BinOp::Mul | BinOp::Div, ..) => 2,
        Expr::Pow(..) => 3,
        _ => 4,
    }
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn write_child(out: &mut String, e: &Expr, parens: bool) {
    if parens {
        out.push('(');
        write_expr(out, e);
        out.push(')');
    } else {
        write_expr(out, e);
    }
}

fn write_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Num(x) => out.push_str(&num(*x)),
        Expr::Var(i) => {
            out.push('u');
            out.push_str(&(i + 1).to_string());
        }
        Expr::Neg(a) => {
            out.push('-');
            // `-2.0` would read back as a literal, so keep the negation explicit
            let parens = prec(a) < 4 || matches!(**a, Expr::Num(_));
            write_child(out, a, parens);
        }
        Expr::Func(f, a) => {
            out.push_str(f.name());
            out.push('(');
            write_expr(out, a);
            out.push(')');
        }
        Expr::Bin(op, a, b) => {
            let p = prec(e);
            write_child(out, a, prec(a) < p);
            out.push_str(match op {
                BinOp::Add => " + ",
                BinOp::Sub => " - ",
                BinOp::Mul => "*",
                BinOp::Div => "/",
            });
            write_child(out, b, prec(b) <= p);
        }
        Expr::Pow(a, k) => {
            write_child(out, a, prec(a) < 4);
            out.push('^');
            out.push_str(&k.to_string());
        }
    }
}

/// Canonical text of an expression; parses back to the same tree.
pub fn print_expr(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e);
    s
}

/// Canonical `.imm` text of a spec.
pub fn print_immersion(spec: &ImmersionSpec) -> String {
    let mut s = String::new();
    if !spec.name.is_empty() {
        s.push_str(&format!("# {}\n", spec.name));
    }
    s.push_str(&format!("n = {};\n", spec.n));
    if spec.ambient.is_flat() {
        s.push_str("ambient = flat;\n");
    } else {
        s.push_str(&format!(
            "ambient = space_form({});\n",
            num(spec.ambient.rho)
        ));
    }
    if spec.periodic {
        s.push_str("periodic;\n");
    }
    s.push_str("map = [\n");
    for (k, c) in spec.components.iter().enumerate() {
        s.push_str("    ");
        s.push_str(&print_expr(c));
        if k + 1 < spec.components.len() {
            s.push(',');
        }
        s.push('\n');
    }
    s.push_str("]\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse_expr, parse_immersion};

    #[test]
    fn negation_forms_round_trip() {
        for text in [
            "-u1",
            "-(2.0)",
            "-2.0",
            "-(u1^2)",
            "(-u1)^2",
            "u1 - -3.0",
            "u1*-u2",
            "--u1",
            "(u1^2)^3",
            "1.0 - (2.0 - u1)",
        ] {
            let e = parse_expr(text, None).unwrap();
            let p = print_expr(&e);
            assert_eq!(parse_expr(&p, None).unwrap(), e, "{text} -> {p}");
        }
    }

    #[test]
    fn immersion_round_trip_is_idempotent() {
        let spec = parse_immersion(
            "n=1; ambient=space_form(-1); periodic; map=[cos(u1), sin(u1)/2, -u2^2, 1e-7*u1]",
        )
        .unwrap();
        let text = print_immersion(&spec);
        let again = parse_immersion(&text).unwrap();
        assert_eq!(again, spec);
        assert_eq!(print_immersion(&again), text);
    }
}
