use super::Formula;

const OR: u8 = 1;
const AND: u8 = 2;
const UNTIL: u8 = 3;
const UNARY: u8 = 4;

/// Renders a formula in the concrete syntax accepted by [`super::parse`],
/// with the minimum parentheses needed to parse back to the same tree.
pub fn render(f: &Formula) -> String {
    let mut out = String::new();
    write(f, 0, &mut out);
    out
}

fn level(f: &Formula) -> u8 {
    match f {
        Formula::Or(..) => OR,
        Formula::And(..) => AND,
        Formula::Until(..) => UNTIL,
        _ => UNARY,
    }
}

fn write(f: &Formula, min: u8, out: &mut String) {
    let paren = level(f) < min;
    if paren {
        out.push('(');
    }
    match f {
        Formula::True => out.push_str("true"),
        Formula::False => out.push_str("false"),
        Formula::Atom(a) => out.push_str(a.name()),
        Formula::Not(s) => {
            out.push('!');
            write(s, UNARY, out);
        }
        Formula::Next(s) => prefix("X ", s, out),
        Formula::WeakNext(s) => prefix("WX ", s, out),
        Formula::Eventually(s) => prefix("F ", s, out),
        Formula::Always(s) => prefix("G ", s, out),
        Formula::Or(l, r) => infix(l, " | ", r, OR, AND, out),
        Formula::And(l, r) => infix(l, " & ", r, AND, UNTIL, out),
        Formula::Until(l, r) => infix(l, " U ", r, UNARY, UNTIL, out),
    }
    if paren {
        out.push(')');
    }
}

fn prefix(op: &str, s: &Formula, out: &mut String) {
    out.push_str(op);
    write(s, UNARY, out);
}

fn infix(l: &Formula, op: &str, r: &Formula, lmin: u8, rmin: u8, out: &mut String) {
    write(l, lmin, out);
    out.push_str(op);
    write(r, rmin, out);
}
