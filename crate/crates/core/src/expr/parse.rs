use super::{Expr, ExprError, Func, Var};

/// Parses `source` for a system of dimension `n` (state `x1..xn`, parameters
/// `a1..an`).
pub fn parse(source: &str, n: usize) -> Result<Expr, ExprError> {
    if n == 0 {
        return Err(ExprError::Syntax {
            offset: 0,
            message: "dimension n must be at least 1".into(),
        });
    }
    let mut parser = Parser {
        src: source.as_bytes(),
        pos: 0,
        n,
    };
    parser.skip_ws();
    if parser.at_end() {
        return Err(parser.error("empty expression"));
    }
    let expr = parser.sum()?;
    parser.skip_ws();
    if !parser.at_end() {
        return Err(parser.error("unexpected trailing input"));
    }
    Ok(expr)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    n: usize,
}

impl Parser<'_> {
    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.pos += 1;
        }
    }

    /// Skips whitespace and consumes `c` if it is next.
    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{}`", c as char)))
        }
    }

    fn error(&self, message: &str) -> ExprError {
        ExprError::Syntax {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.product()?;
        loop {
            if self.eat(b'+') {
                let rhs = self.product()?;
                lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
            } else if self.eat(b'-') {
                let rhs = self.product()?;
                lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                let rhs = self.unary()?;
                lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
            } else if self.eat(b'/') {
                let rhs = self.unary()?;
                lhs = Expr::Div(Box::new(lhs), Box::new(rhs));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat(b'-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let mut base = self.atom()?;
        while self.eat(b'^') {
            let exponent = self.exponent()?;
            base = Expr::Pow(Box::new(base), exponent);
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<f64, ExprError> {
        self.skip_ws();
        match self.peek() {
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(b'(') => {
                self.pos += 1;
                let sign = if self.eat(b'-') {
                    -1.0
                } else {
                    self.eat(b'+');
                    1.0
                };
                self.skip_ws();
                let num = self.number()?;
                let value = if self.eat(b'/') {
                    self.skip_ws();
                    let start = self.pos;
                    let den = self.number()?;
                    if den == 0.0 {
                        return Err(ExprError::Syntax {
                            offset: start,
                            message: "zero denominator in exponent".into(),
                        });
                    }
                    num / den
                } else {
                    num
                };
                self.expect(b')')?;
                Ok(sign * value)
            }
            _ => Err(self.error("exponent must be a numeric literal")),
        }
    }

    fn number(&mut self) -> Result<f64, ExprError> {
        let start = self.pos;
        let digits = |p: &mut Self| {
            let s = p.pos;
            while matches!(p.peek(), Some(c) if c.is_ascii_digit()) {
                p.pos += 1;
            }
            p.pos - s
        };
        let mut count = digits(self);
        if self.peek() == Some(b'.') {
            self.pos += 1;
            count += digits(self);
        }
        if count == 0 {
            self.pos = start;
            return Err(self.error("expected a number"));
        }
        if matches!(self.peek(), Some(b'e' | b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.peek(), Some(b'+' | b'-')) {
                self.pos += 1;
            }
            if digits(self) == 0 {
                // `2e` is a number followed by garbage, not an exponent.
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii slice");
        text.parse::<f64>().map_err(|_| ExprError::Syntax {
            offset: start,
            message: format!("malformed number `{text}`"),
        })
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.sum()?;
                self.expect(b')')?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => Ok(Expr::Num(self.number()?)),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            Some(c) => Err(self.error(&format!("unexpected character `{}`", c as char))),
        }
    }

    fn identifier(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while matches!(self.peek(), Some(c) if c.is_ascii_alphanumeric() || c == b'_') {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii slice");
        if name == "t" {
            return Ok(Expr::Var(Var::T));
        }
        if let Some(func) = Func::from_name(name) {
            self.expect(b'(')?;
            let arg = self.sum()?;
            self.expect(b')')?;
            return Ok(Expr::Call(func, Box::new(arg)));
        }
        let (head, tail) = name.split_at(1);
        if (head == "x" || head == "a")
            && !tail.is_empty()
            && tail.bytes().all(|c| c.is_ascii_digit())
        {
            let index: usize = tail.parse().unwrap_or(0);
            if index == 0 || index > self.n {
                return Err(ExprError::VariableOutOfRange {
                    name: name.to_string(),
                    offset: start,
                    n: self.n,
                });
            }
            return Ok(Expr::Var(if head == "x" {
                Var::X(index - 1)
            } else {
                Var::A(index - 1)
            }));
        }
        Err(ExprError::UnknownIdentifier {
            name: name.to_string(),
            offset: start,
        })
    }
}
