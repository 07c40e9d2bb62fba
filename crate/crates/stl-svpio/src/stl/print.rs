//! Canonical formula text. `parse_formula(pretty_print(f))` reproduces `f`
//! exactly; parentheses are emitted only where precedence demands them.

use std::fmt::Write;

use super::{Formula, Interval};

const PREC_IMPLIES: u8 = 1;
const PREC_OR: u8 = 2;
const PREC_AND: u8 = 3;
const PREC_UNTIL: u8 = 4;
const PREC_UNARY: u8 = 5;
const PREC_ATOM: u8 = 6;

fn prec(f: &Formula) -> u8 {
    match f {
        Formula::True | Formula::Pred(_) => PREC_ATOM,
        Formula::Not(_) | Formula::Eventually(..) | Formula::Always(..) => PREC_UNARY,
        Formula::Until(..) => PREC_UNTIL,
        Formula::And(_) => PREC_AND,
        Formula::Or(_) => PREC_OR,
        Formula::Implies(..) => PREC_IMPLIES,
    }
}

pub fn pretty_print(f: &Formula) -> String {
    let mut out = String::new();
    write_formula(&mut out, f, PREC_IMPLIES);
    out
}

fn write_interval(out: &mut String, iv: &Interval) {
    let _ = write!(out, "[{},{}]", iv.lo, iv.hi);
}

fn write_formula(out: &mut String, f: &Formula, min_prec: u8) {
    if prec(f) < min_prec {
        out.push('(');
        write_formula(out, f, PREC_IMPLIES);
        out.push(')');
        return;
    }
    match f {
        Formula::True => out.push_str("TRUE"),
        Formula::Pred(name) => out.push_str(name),
        Formula::Not(c) => {
            out.push_str("not ");
            write_formula(out, c, PREC_UNARY);
        }
        Formula::Eventually(iv, c) => {
            out.push('F');
            write_interval(out, iv);
            out.push(' ');
            write_formula(out, c, PREC_UNARY);
        }
        Formula::Always(iv, c) => {
            out.push('G');
            write_interval(out, iv);
            out.push(' ');
            write_formula(out, c, PREC_UNARY);
        }
        Formula::Until(iv, l, r) => {
            write_formula(out, l, PREC_UNTIL + 1);
            out.push_str(" U");
            write_interval(out, iv);
            out.push(' ');
            write_formula(out, r, PREC_UNTIL);
        }
        Formula::And(cs) => write_nary(out, cs, " and ", PREC_AND),
        Formula::Or(cs) => write_nary(out, cs, " or ", PREC_OR),
        Formula::Implies(l, r) => {
            write_formula(out, l, PREC_IMPLIES + 1);
            out.push_str(" implies ");
            write_formula(out, r, PREC_IMPLIES);
        }
    }
}

fn write_nary(out: &mut String, children: &[Formula], sep: &str, level: u8) {
    for (i, c) in children.iter().enumerate() {
        if i > 0 {
            out.push_str(sep);
        }
        write_formula(out, c, level + 1);
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse_formula;
    use super::*;

    fn iv(lo: usize, hi: usize) -> Interval {
        Interval { lo, hi }
    }

    fn roundtrips(f: &Formula) {
        let text = pretty_print(f);
        let reparsed = parse_formula(&text).unwrap();
        assert_eq!(&reparsed, f, "text was: {text}");
    }

    #[test]
    fn parens_only_where_needed() {
        let f = Formula::always(
            iv(0, 10),
            Formula::or(vec![
                Formula::pred("a"),
                Formula::and(vec![Formula::pred("b"), Formula::not(Formula::pred("c"))]),
            ]),
        );
        assert_eq!(pretty_print(&f), "G[0,10] (a or b and not c)");
        roundtrips(&f);
    }

    #[test]
    fn nested_nary_keeps_structure() {
        let inner = Formula::and(vec![Formula::pred("a"), Formula::pred("b")]);
        let f = Formula::and(vec![inner, Formula::pred("c")]);
        assert_eq!(pretty_print(&f), "(a and b) and c");
        roundtrips(&f);
    }

    #[test]
    fn until_associativity_preserved() {
        let right = Formula::until(
            iv(0, 1),
            Formula::pred("a"),
            Formula::until(iv(1, 2), Formula::pred("b"), Formula::pred("c")),
        );
        assert_eq!(pretty_print(&right), "a U[0,1] b U[1,2] c");
        roundtrips(&right);

        let left = Formula::until(
            iv(1, 2),
            Formula::until(iv(0, 1), Formula::pred("a"), Formula::pred("b")),
            Formula::pred("c"),
        );
        assert_eq!(pretty_print(&left), "(a U[0,1] b) U[1,2] c");
        roundtrips(&left);
    }
}
