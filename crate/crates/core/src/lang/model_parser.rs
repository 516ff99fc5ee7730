use super::lexer::{Tok, Token};
use super::{NameUse, ParseError, Parser, RESERVED};
use crate::model::{
    Expr, HybridSystem, Mode, Model, Reaction, ReactionNetwork, SdeSystem, Species, Variable,
};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    Ctmc,
    Sde,
    Hybrid,
}

/// Symbol declared in a model block.
struct Decl {
    name: String,
}

#[derive(Default)]
struct Collected {
    decls: Vec<Decl>,
    species: Vec<Species>,
    vars: Vec<Variable>,
    modes: Vec<(String, bool, Token)>,
    constants: Vec<(String, f64)>,
    params: Vec<String>,
    reactions: Vec<(Reaction, Token)>,
    /// Reactant and product sides, resolved against species after parsing.
    sides: Vec<(Side, Side)>,
    drifts: Vec<(String, Expr, Token)>,
    noises: Vec<(String, Option<String>, Expr, Token)>,
    rates: Vec<(String, bool, Expr, Token)>,
    /// Every name referenced by an expression, with its context.
    uses: Vec<(NameUse, String)>,
}

/// Parses a `ctmc`, `sde` or `hybrid` model block.
pub fn parse_model(src: &str) -> Result<Model, ParseError> {
    let mut p = Parser::new(src)?;
    let kind = match p.peek() {
        Tok::Ident(s) if s == "ctmc" => Kind::Ctmc,
        Tok::Ident(s) if s == "sde" => Kind::Sde,
        Tok::Ident(s) if s == "hybrid" => Kind::Hybrid,
        _ => return Err(p.error("`ctmc`, `sde` or `hybrid`")),
    };
    p.advance();
    let (name, _) = p.ident()?;
    p.expect(&Tok::LBrace)?;
    let mut c = Collected::default();
    while !p.eat(&Tok::RBrace) {
        decl(&mut p, kind, &mut c)?;
    }
    if !p.at_eof() {
        return Err(p.error("end of input"));
    }
    build(&p, kind, name, c)
}

fn declare(p: &Parser, c: &mut Collected, name: &str, tok: &Token) -> Result<(), ParseError> {
    if RESERVED.contains(&name) {
        return Err(p.error_at(tok, "a non-reserved name", format!("`{name}`")));
    }
    if c.decls.iter().any(|d| d.name == name) {
        return Err(p.error_at(tok, "a fresh name", format!("duplicate declaration of `{name}`")));
    }
    c.decls.push(Decl { name: name.to_string() });
    Ok(())
}

fn wrong_kind(p: &Parser, tok: &Token, what: &str) -> ParseError {
    p.error_at(tok, "a declaration valid for this model class", format!("`{what}`"))
}

fn decl(p: &mut Parser, kind: Kind, c: &mut Collected) -> Result<(), ParseError> {
    let (kw, kw_tok) = p.ident().map_err(|_| p.error("a declaration keyword"))?;
    match kw.as_str() {
        "species" => {
            if kind != Kind::Ctmc {
                return Err(wrong_kind(p, &kw_tok, "species"));
            }
            let (name, tok) = p.ident()?;
            p.expect(&Tok::Assign)?;
            let count_tok = p.token().clone();
            let v = p.number()?;
            if v < 0.0 || v.fract() != 0.0 {
                return Err(p.error_at(&count_tok, "a non-negative integer count", format!("`{v}`")));
            }
            declare(p, c, &name, &tok)?;
            c.species.push(Species { name, initial: v as u64 });
        }
        "var" => {
            if kind == Kind::Ctmc {
                return Err(wrong_kind(p, &kw_tok, "var"));
            }
            let (name, tok) = p.ident()?;
            p.expect(&Tok::Assign)?;
            let v = p.number()?;
            declare(p, c, &name, &tok)?;
            c.vars.push(Variable { name, initial: v });
        }
        "mode" => {
            if kind != Kind::Hybrid {
                return Err(wrong_kind(p, &kw_tok, "mode"));
            }
            let (name, tok) = p.ident()?;
            p.expect(&Tok::Assign)?;
            let v_tok = p.token().clone();
            let v = p.number()?;
            if v != 0.0 && v != 1.0 {
                return Err(p.error_at(&v_tok, "`0` or `1`", format!("`{v}`")));
            }
            declare(p, c, &name, &tok)?;
            c.modes.push((name, v == 1.0, tok));
        }
        "const" => {
            let (name, tok) = p.ident()?;
            p.expect(&Tok::Assign)?;
            let v = p.number()?;
            declare(p, c, &name, &tok)?;
            c.constants.push((name, v));
        }
        "param" => loop {
            let (name, tok) = p.ident()?;
            declare(p, c, &name, &tok)?;
            c.params.push(name);
            if !p.eat(&Tok::Comma) {
                break;
            }
        },
        "reaction" => {
            if kind != Kind::Ctmc {
                return Err(wrong_kind(p, &kw_tok, "reaction"));
            }
            let (name, tok) = p.ident()?;
            p.expect(&Tok::Colon)?;
            let lhs = side(p)?;
            p.expect(&Tok::Arrow)?;
            let rhs = side(p)?;
            p.expect(&Tok::At)?;
            let mut uses = Vec::new();
            let rate = p.expr(&mut uses)?;
            let ctx = format!("rate of reaction `{name}`");
            c.uses.extend(uses.into_iter().map(|u| (u, ctx.clone())));
            let reaction = Reaction { name, reactants: Vec::new(), products: Vec::new(), rate };
            c.reactions.push((reaction, tok.clone()));
            c.sides.push((lhs, rhs));
        }
        "drift" => {
            if kind == Kind::Ctmc {
                return Err(wrong_kind(p, &kw_tok, "drift"));
            }
            let (name, tok) = p.ident()?;
            p.expect(&Tok::Assign)?;
            let mut uses = Vec::new();
            let e = p.expr(&mut uses)?;
            let ctx = format!("drift of `{name}`");
            c.uses.extend(uses.into_iter().map(|u| (u, ctx.clone())));
            c.drifts.push((name, e, tok));
        }
        "noise" => {
            if kind == Kind::Ctmc {
                return Err(wrong_kind(p, &kw_tok, "noise"));
            }
            let (name, tok) = p.ident()?;
            let channel = if p.eat(&Tok::Comma) { Some(p.ident()?.0) } else { None };
            p.expect(&Tok::Assign)?;
            let mut uses = Vec::new();
            let e = p.expr(&mut uses)?;
            let ctx = format!("noise of `{name}`");
            c.uses.extend(uses.into_iter().map(|u| (u, ctx.clone())));
            c.noises.push((name, channel, e, tok));
        }
        "rate" => {
            if kind != Kind::Hybrid {
                return Err(wrong_kind(p, &kw_tok, "rate"));
            }
            let (name, tok) = p.ident()?;
            let (from, _) = p.ident()?;
            p.expect(&Tok::Arrow)?;
            let (to, to_tok) = p.ident()?;
            let on_to_off = match (from.as_str(), to.as_str()) {
                ("on", "off") => true,
                ("off", "on") => false,
                _ => return Err(p.error_at(&to_tok, "`on->off` or `off->on`", format!("`{from}->{to}`"))),
            };
            p.expect(&Tok::Assign)?;
            let mut uses = Vec::new();
            let e = p.expr(&mut uses)?;
            let ctx = format!("switching rate of `{name}`");
            c.uses.extend(uses.into_iter().map(|u| (u, ctx.clone())));
            c.rates.push((name, on_to_off, e, tok));
        }
        _ => return Err(p.error_at(&kw_tok, "a declaration keyword", format!("`{kw}`"))),
    }
    p.expect(&Tok::Semi)
}

type Side = Vec<(u32, String, Token)>;

/// `side := "0" | term ("+" term)*`, `term := (NUMBER "*")? IDENT`
fn side(p: &mut Parser) -> Result<Side, ParseError> {
    if let Tok::Number(v) = *p.peek() {
        if v == 0.0 && !matches!(p.peek_at(1), Tok::Star) {
            p.advance();
            return Ok(Vec::new());
        }
    }
    let mut out = Vec::new();
    loop {
        let mut coef = 1u32;
        if let Tok::Number(v) = *p.peek() {
            let t = p.token().clone();
            if v < 1.0 || v.fract() != 0.0 {
                return Err(p.error_at(&t, "a positive integer coefficient", format!("`{v}`")));
            }
            p.advance();
            p.expect(&Tok::Star)?;
            coef = v as u32;
        }
        let (name, tok) = p.ident()?;
        out.push((coef, name, tok));
        if !p.eat(&Tok::Plus) {
            return Ok(out);
        }
    }
}

fn build(p: &Parser, kind: Kind, name: String, c: Collected) -> Result<Model, ParseError> {
    let known = |n: &str| c.decls.iter().any(|d| d.name == n);
    for (u, ctx) in &c.uses {
        if !known(&u.name) {
            return Err(ParseError {
                line: u.line,
                col: u.col,
                expected: format!("a declared symbol in {ctx}"),
                found: format!("undeclared `{}`", u.name),
            });
        }
    }
    match kind {
        Kind::Ctmc => {
            let species_index = |n: &str| c.species.iter().position(|s| s.name == n);
            let mut reactions = Vec::new();
            for ((mut r, _), (lhs, rhs)) in c.reactions.into_iter().zip(c.sides) {
                let fill = |side: &Side| -> Result<Vec<u32>, ParseError> {
                    let mut v = vec![0u32; c.species.len()];
                    for (coef, n, tok) in side {
                        let i = species_index(n).ok_or_else(|| {
                            p.error_at(tok, "a declared species", format!("undeclared `{n}`"))
                        })?;
                        v[i] += coef;
                    }
                    Ok(v)
                };
                r.reactants = fill(&lhs)?;
                r.products = fill(&rhs)?;
                reactions.push(r);
            }
            Ok(Model::Ctmc(ReactionNetwork {
                name,
                species: c.species,
                constants: c.constants,
                parameters: c.params,
                reactions,
            }))
        }
        Kind::Sde | Kind::Hybrid => {
            let n = c.vars.len();
            let mut drift = vec![Expr::Const(0.0); n];
            let mut seen = vec![false; n];
            for (v, e, tok) in c.drifts {
                let i = c.vars.iter().position(|x| x.name == v).ok_or_else(|| {
                    p.error_at(&tok, "a declared continuous variable", format!("`{v}`"))
                })?;
                if seen[i] {
                    return Err(p.error_at(&tok, "one drift per variable", format!("second drift for `{v}`")));
                }
                seen[i] = true;
                drift[i] = e;
            }
            let mut channels: Vec<String> = Vec::new();
            let mut entries = Vec::new();
            for (v, ch, e, tok) in c.noises {
                let i = c.vars.iter().position(|x| x.name == v).ok_or_else(|| {
                    p.error_at(&tok, "a declared continuous variable", format!("`{v}`"))
                })?;
                let ch = ch.unwrap_or_else(|| v.clone());
                let j = match channels.iter().position(|x| *x == ch) {
                    Some(j) => j,
                    None => {
                        channels.push(ch.clone());
                        channels.len() - 1
                    }
                };
                if entries.iter().any(|&(a, b, _)| a == i && b == j) {
                    return Err(p.error_at(&tok, "one noise entry per (variable, channel)", format!("duplicate `{v}, {ch}`")));
                }
                entries.push((i, j, e));
            }
            let mut diffusion = vec![vec![None; channels.len()]; n];
            for (i, j, e) in entries {
                diffusion[i][j] = Some(e);
            }
            let sde = SdeSystem {
                name,
                variables: c.vars,
                drift,
                noise_channels: channels,
                diffusion,
                constants: c.constants,
                parameters: c.params,
            };
            if kind == Kind::Sde {
                return Ok(Model::Sde(sde));
            }
            let mut modes: Vec<Mode> = c
                .modes
                .iter()
                .map(|(m, on, _)| Mode {
                    name: m.clone(),
                    initially_on: *on,
                    on_to_off: Expr::Const(0.0),
                    off_to_on: Expr::Const(0.0),
                })
                .collect();
            let mut seen = vec![[false; 2]; modes.len()];
            for (m, on_to_off, e, tok) in c.rates {
                let i = modes.iter().position(|x| x.name == m).ok_or_else(|| {
                    p.error_at(&tok, "a declared mode", format!("`{m}`"))
                })?;
                let slot = usize::from(on_to_off);
                if seen[i][slot] {
                    return Err(p.error_at(&tok, "one rate per mode and direction", format!("duplicate rate for `{m}`")));
                }
                seen[i][slot] = true;
                if on_to_off {
                    modes[i].on_to_off = e;
                } else {
                    modes[i].off_to_on = e;
                }
            }
            Ok(Model::Hybrid(HybridSystem { modes, continuous: sde }))
        }
    }
}
