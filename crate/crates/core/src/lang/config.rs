use super::formula::{formula, Symbols};
use super::lexer::Tok;
use super::{Formula, ParseError, Parser};
use crate::model::{Axis, ParameterSpace, Scale};
use crate::smc::GammaPrior;

/// A named property from a props file.
#[derive(Debug, Clone, PartialEq)]
pub struct Property {
    pub name: String,
    pub formula: Formula,
    /// Formula text as written.
    pub source: String,
}

/// `prop NAME = formula;` repeated.
pub fn parse_props(src: &str, symbols: &Symbols) -> Result<Vec<Property>, ParseError> {
    let mut p = Parser::new(src)?;
    let mut out: Vec<Property> = Vec::new();
    while !p.at_eof() {
        p.expect_keyword("prop")?;
        let (name, tok) = p.ident()?;
        if out.iter().any(|q| q.name == name) {
            return Err(p.error_at(&tok, "a fresh property name", format!("duplicate `{name}`")));
        }
        p.expect(&Tok::Assign)?;
        let start = p.save();
        let f = formula(&mut p, symbols)?;
        let source = p.source_between(start, p.save()).to_string();
        p.expect(&Tok::Semi)?;
        out.push(Property { name, formula: f, source });
    }
    if out.is_empty() {
        return Err(p.error("at least one `prop` declaration"));
    }
    Ok(out)
}

/// Entries `name in [a, b] (log|linear)?` or `name = value`, optionally `;`-terminated.
pub fn parse_space(src: &str) -> Result<ParameterSpace, ParseError> {
    let mut p = Parser::new(src)?;
    let mut axes = Vec::new();
    let mut fixed = Vec::new();
    let mut names: Vec<String> = Vec::new();
    while !p.at_eof() {
        let (name, tok) = p.ident()?;
        if names.contains(&name) {
            return Err(p.error_at(&tok, "a fresh parameter name", format!("duplicate `{name}`")));
        }
        names.push(name.clone());
        if p.eat(&Tok::Assign) {
            fixed.push((name, p.number()?));
        } else {
            p.expect_keyword("in").map_err(|_| p.error("`in` or `=`"))?;
            p.expect(&Tok::LBracket)?;
            let lower = p.number()?;
            p.expect(&Tok::Comma)?;
            let upper = p.number()?;
            p.expect(&Tok::RBracket)?;
            let scale = if p.is_keyword("log") {
                p.advance();
                Scale::Log
            } else if p.is_keyword("linear") {
                p.advance();
                Scale::Linear
            } else {
                Scale::Linear
            };
            let axis = Axis::new(name, lower, upper, scale).map_err(|e| p.error_at(&tok, "a valid range", e.to_string()))?;
            axes.push(axis);
        }
        p.eat(&Tok::Semi);
    }
    if axes.is_empty() {
        return Err(p.error("at least one `name in [a, b]` range"));
    }
    Ok(ParameterSpace { axes, fixed })
}

/// `name ~ gamma(shape, mean);` repeated.
pub fn parse_priors(src: &str) -> Result<Vec<GammaPrior>, ParseError> {
    let mut p = Parser::new(src)?;
    let mut out: Vec<GammaPrior> = Vec::new();
    while !p.at_eof() {
        let (name, tok) = p.ident()?;
        if out.iter().any(|g| g.name == name) {
            return Err(p.error_at(&tok, "a fresh parameter name", format!("duplicate `{name}`")));
        }
        p.expect(&Tok::Tilde)?;
        p.expect_keyword("gamma")?;
        p.expect(&Tok::LParen)?;
        let shape_tok = p.token().clone();
        let shape = p.number()?;
        p.expect(&Tok::Comma)?;
        let mean = p.number()?;
        p.expect(&Tok::RParen)?;
        p.eat(&Tok::Semi);
        let prior = GammaPrior::new(name, shape, mean)
            .ok_or_else(|| p.error_at(&shape_tok, "positive shape and mean", format!("gamma({shape}, {mean})")))?;
        out.push(prior);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn space_with_log_and_linear_axes() {
        let s = parse_space("ks in [0.1, 10] log; kr in [0.08, 8] log").unwrap();
        assert_eq!(s.dim(), 2);
        assert_eq!(s.axes[1].lower, 0.08);
        assert_eq!(s.axes[0].scale, Scale::Log);
        let s = parse_space("x in [0,1] linear\nalpha = 0.1;").unwrap();
        assert_eq!(s.axes[0].scale, Scale::Linear);
        assert_eq!(s.fixed, vec![("alpha".to_string(), 0.1)]);
        assert_eq!(parse_space("x in [-1, 1]").unwrap().axes[0].scale, Scale::Linear);
    }

    #[test]
    fn space_errors() {
        let e = parse_space("x in [5,2]").unwrap_err();
        assert!(e.found.contains("not below"), "{e}");
        assert!(parse_space("x in [0, 2] log").is_err());
        assert!(parse_space("x in [1, 2]; x in [1, 3]").is_err());
        assert!(parse_space("x = 2").is_err());
        let e = parse_space("x on [1,2]").unwrap_err();
        assert_eq!((e.line, e.col), (1, 3));
    }

    #[test]
    fn priors() {
        let p = parse_priors("ks ~ gamma(10, 1);\nkr ~ gamma(10, 0.5);").unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p[1].mean, 0.5);
        assert!(parse_priors("ks ~ gamma(0, 1);").is_err());
        assert!(parse_priors("ks ~ normal(1, 1);").is_err());
    }

    #[test]
    fn props_keep_names_and_source() {
        let syms = Symbols::states(["S", "R"]);
        let props = parse_props("prop p1 = G[0,200] (S < 45);\n# note\nprop p4 = G[90,200] (82 < R < 88);\n", &syms).unwrap();
        assert_eq!(props.len(), 2);
        assert_eq!(props[0].name, "p1");
        assert_eq!(props[1].source, "G[90,200] (82 < R < 88)");
        assert!(parse_props("prop a = S > 1; prop a = tt;", &syms).is_err());
        assert!(parse_props("prop a = S > 1", &syms).is_err());
        assert!(parse_props("", &syms).is_err());
    }
}
