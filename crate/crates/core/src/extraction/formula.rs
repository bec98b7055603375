//! Arithmetic over named statistics: `+ - * /`, parentheses, unary minus.

use std::collections::HashMap;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormulaError {
    #[error("syntax error at character {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unbound name '{name}' at character {position}")]
    UnboundName { name: String, position: usize },
    #[error("division by zero at character {position}")]
    DivisionByZero { position: usize },
}

impl FormulaError {
    pub fn is_arithmetic(&self) -> bool {
        matches!(self, FormulaError::DivisionByZero { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

fn is_ident_start(c: char) -> bool {
    c.is_alphabetic() || c == '_'
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Tokens with their character positions.
fn tokenize(expr: &str) -> Result<Vec<(Tok, usize)>, FormulaError> {
    let chars: Vec<char> = expr.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text.parse::<f64>().map_err(|_| FormulaError::Syntax {
                position: start,
                message: format!("malformed number '{text}'"),
            })?;
            out.push((Tok::Num(v), start));
        } else if is_ident_start(c) {
            let start = i;
            while i < chars.len() && is_ident_char(chars[i]) {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), start));
        } else {
            let tok = match c {
                '+' | '-' | '*' | '/' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                _ => {
                    return Err(FormulaError::Syntax {
                        position: i,
                        message: format!("unexpected character '{c}'"),
                    })
                }
            };
            out.push((tok, i));
            i += 1;
        }
    }
    out.push((Tok::End, chars.len()));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    bindings: Option<&'a HashMap<String, f64>>,
    names: Vec<String>,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn at(&self) -> usize {
        self.toks[self.pos].1
    }

    fn expr(&mut self) -> Result<f64, FormulaError> {
        let mut acc = self.term()?;
        while let Tok::Op(op @ ('+' | '-')) = *self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            acc = if op == '+' { acc + rhs } else { acc - rhs };
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<f64, FormulaError> {
        let mut acc = self.unary()?;
        while let Tok::Op(op @ ('*' | '/')) = *self.peek() {
            let position = self.at();
            self.pos += 1;
            let rhs = self.unary()?;
            if op == '*' {
                acc *= rhs;
            } else if rhs == 0.0 && self.bindings.is_some() {
                return Err(FormulaError::DivisionByZero { position });
            } else {
                acc /= rhs;
            }
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<f64, FormulaError> {
        if *self.peek() == Tok::Op('-') {
            self.pos += 1;
            return Ok(-self.unary()?);
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<f64, FormulaError> {
        let position = self.at();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(v)
            }
            Tok::Ident(name) => {
                self.pos += 1;
                match self.bindings {
                    Some(b) => b
                        .get(&name)
                        .copied()
                        .ok_or(FormulaError::UnboundName { name, position }),
                    None => {
                        if !self.names.contains(&name) {
                            self.names.push(name);
                        }
                        Ok(1.0)
                    }
                }
            }
            Tok::LParen => {
                self.pos += 1;
                let v = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return Err(FormulaError::Syntax {
                        position: self.at(),
                        message: "expected ')'".into(),
                    });
                }
                self.pos += 1;
                Ok(v)
            }
            Tok::End => Err(FormulaError::Syntax {
                position,
                message: "unexpected end of formula".into(),
            }),
            other => Err(FormulaError::Syntax {
                position,
                message: format!("unexpected {}", describe(&other)),
            }),
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Op(c) => format!("operator '{c}'"),
        Tok::RParen => "')'".into(),
        Tok::LParen => "'('".into(),
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("name '{s}'"),
        Tok::End => "end of formula".into(),
    }
}

fn run(expr: &str, bindings: Option<&HashMap<String, f64>>) -> Result<(f64, Vec<String>), FormulaError> {
    let mut p = Parser {
        toks: tokenize(expr)?,
        pos: 0,
        bindings,
        names: Vec::new(),
    };
    let v = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(FormulaError::Syntax {
            position: p.at(),
            message: format!("unexpected {}", describe(p.peek())),
        });
    }
    Ok((v, p.names))
}

pub fn eval_formula(expr: &str, bindings: &HashMap<String, f64>) -> Result<f64, FormulaError> {
    run(expr, Some(bindings)).map(|(v, _)| v)
}

/// Identifiers referenced by a formula, in first-appearance order. Also
/// checks the syntax.
pub fn identifiers(expr: &str) -> Result<Vec<String>, FormulaError> {
    run(expr, None).map(|(_, names)| names)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(pairs: &[(&str, f64)]) -> HashMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn examples() {
        let v = eval_formula("reserves / production", &b(&[("reserves", 100.0), ("production", 4.0)])).unwrap();
        assert_eq!(v, 25.0);
        let v = eval_formula("(a + b) * c", &b(&[("a", 1.0), ("b", 2.0), ("c", 3.0)])).unwrap();
        assert_eq!(v, 9.0);
        let e = eval_formula("a / b", &b(&[("a", 1.0), ("b", 0.0)])).unwrap_err();
        assert_eq!(e, FormulaError::DivisionByZero { position: 2 });
        assert!(e.is_arithmetic());
    }

    #[test]
    fn precedence_and_associativity() {
        let e = HashMap::new();
        assert_eq!(eval_formula("1 + 2 * 3", &e).unwrap(), 7.0);
        assert_eq!(eval_formula("8 / 4 / 2", &e).unwrap(), 1.0);
        assert_eq!(eval_formula("10 - 4 - 3", &e).unwrap(), 3.0);
        assert_eq!(eval_formula("-2 * -3", &e).unwrap(), 6.0);
        assert_eq!(eval_formula("--2", &e).unwrap(), 2.0);
        assert_eq!(eval_formula("1.5e3 + .5", &e).unwrap(), 1500.5);
    }

    #[test]
    fn errors_carry_positions() {
        let e = HashMap::new();
        assert_eq!(
            eval_formula("a + 1", &e).unwrap_err(),
            FormulaError::UnboundName { name: "a".into(), position: 0 }
        );
        assert!(matches!(eval_formula("1 +", &e), Err(FormulaError::Syntax { position: 3, .. })));
        assert!(matches!(eval_formula("(1 + 2", &e), Err(FormulaError::Syntax { position: 6, .. })));
        assert!(matches!(eval_formula("1 $ 2", &e), Err(FormulaError::Syntax { position: 2, .. })));
        assert!(matches!(eval_formula("1 2", &e), Err(FormulaError::Syntax { position: 2, .. })));
        assert!(matches!(eval_formula("", &e), Err(FormulaError::Syntax { position: 0, .. })));
        assert!(matches!(eval_formula("1..2", &e), Err(FormulaError::Syntax { position: 0, .. })));
    }

    #[test]
    fn identifier_listing() {
        assert_eq!(identifiers("r / p + r * 2").unwrap(), vec!["r".to_string(), "p".to_string()]);
        assert_eq!(identifiers("x / 0").unwrap(), vec!["x".to_string()]);
        assert!(identifiers("x +").is_err());
    }
}
