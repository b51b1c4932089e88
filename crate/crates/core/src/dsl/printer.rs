use num_traits::Signed;

use super::SystemSpec;
use crate::operator::OperatorSpec;

/// Renders the rows of `op` so that `parse_operator` reads them back to the
/// same operator. Components are written `u1..` or `f1..` depending on `letter`.
pub fn print_rows(op: &OperatorSpec, letter: char) -> String {
    let rows: Vec<String> = (0..op.target_dim())
        .map(|i| print_row(op, i, letter))
        .collect();
    format!("rows: {}", rows.join(";\n      "))
}

fn print_row(op: &OperatorSpec, row: usize, letter: char) -> String {
    let mut out = String::new();
    for j in 0..op.source_dim() {
        let p = op.entry(row, j);
        if p.is_zero() {
            continue;
        }
        let (neg, body) = if p.num_terms() == 1 {
            let (_, c) = p.terms().next().expect("one term");
            if c.is_negative() {
                (true, (-&p).to_string())
            } else {
                (false, p.to_string())
            }
        } else {
            (false, format!("({p})"))
        };
        let body = if body == "1" { String::new() } else { body + " " };
        let sep = match (out.is_empty(), neg) {
            (true, true) => "-",
            (true, false) => "",
            (false, true) => " - ",
            (false, false) => " + ",
        };
        out.push_str(&format!("{sep}{body}{letter}{}", j + 1));
    }
    if out.is_empty() {
        out.push('0');
    }
    out
}

/// A full `operator`/`constraint` block.
pub fn print_operator(kind: &str, name: &str, op: &OperatorSpec, letter: char) -> String {
    format!(
        "{kind} {name} {{\n  from {} to {}\n  {}\n}}\n",
        op.source_dim(),
        op.target_dim(),
        print_rows(op, letter).replace('\n', "\n  ")
    )
}

pub fn print_system(sys: &SystemSpec) -> String {
    let mut s = format!("dim {}\n", sys.n);
    s.push_str(&print_operator("operator", &sys.a_name, &sys.a, 'u'));
    if let Some(c) = &sys.c {
        let name = sys.c_name.as_deref().unwrap_or("C");
        s.push_str(&print_operator("constraint", name, c, 'f'));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{parse_operator, parse_system, SourceText};
    use crate::poly::MultiIndex;
    use crate::rational::{q, qr, Q};
    use proptest::prelude::*;

    #[test]
    fn prints_curl_rows() {
        let op = parse_operator(&SourceText::inline("rows: d2 u3 - d3 u2; -d1 u1"), 3, 3).unwrap();
        assert_eq!(print_rows(&op, 'u'), "rows: -d3 u2 + d2 u3;\n      -d1 u1");
    }

    #[test]
    fn system_round_trip() {
        let text = "dim 2\noperator A {\n  from 1 to 2\n  rows: d1 u1;\n        d2 u1\n}\nconstraint C {\n  from 2 to 1\n  rows: d2 f1 - d1 f2\n}\n";
        let sys = parse_system(&SourceText::inline(text)).unwrap();
        assert_eq!(print_system(&sys), text);
    }

    fn arb_operator() -> impl Strategy<Value = OperatorSpec> {
        let n = 3usize;
        (1usize..4, 1usize..4, 0u32..4).prop_flat_map(move |(src, tgt, k)| {
            let monos = MultiIndex::all_of_degree(n, k);
            let per_row = src * monos.len();
            proptest::collection::vec(
                proptest::collection::vec((-4i64..5, 1i64..4), per_row),
                tgt,
            )
            .prop_map(move |rows| {
                let mut op = OperatorSpec::zero(n, src, tgt);
                for (i, row) in rows.iter().enumerate() {
                    for (t, &(a, b)) in row.iter().enumerate() {
                        let (j, m) = (t / monos.len(), t % monos.len());
                        if a != 0 && (t % 3 != 1) {
                            op.add_term(i, j, monos[m].clone(), qr(a, b));
                        }
                    }
                }
                op
            })
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(op in arb_operator()) {
            let text = print_rows(&op, 'f');
            let back = parse_operator(&SourceText::inline(text.clone()), 3, op.source_dim()).unwrap();
            prop_assert_eq!(back, op, "{}", text);
        }
    }

    #[test]
    fn constant_coefficients() {
        let mut op = OperatorSpec::zero(2, 2, 1);
        op.add_term(0, 0, MultiIndex::zero(2), q(1));
        op.add_term(0, 1, MultiIndex::zero(2), Q::from_integer((-3).into()));
        assert_eq!(print_rows(&op, 'u'), "rows: u1 - 3 u2");
    }
}
