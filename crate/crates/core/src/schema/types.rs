//! The semantic type system shared by tool contracts, workflow parameters and
//! the inter-step compatibility checks.
//!
//! Type expressions follow a small closed grammar:
//!
//! ```text
//! type  := base | "list[" base "]" | "dict" [ "{" names "}" ]
//!        | "dataframe" [ "{" names "}" ]
//! base  := str | int | float | bool | string | number | integer | boolean
//!        | model-ref | dataset-ref
//! names := name { "," name }
//! ```
//!
//! `str`, `int`, `float` and `bool` are aliases and normalise to their long
//! forms. A dataframe without a column set is `dynamic`: its columns are not
//! checked.

use std::collections::BTreeSet;
use std::fmt;

/// Column metadata carried by a dataframe type.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Columns {
    Dynamic,
    Declared(BTreeSet<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SemanticType {
    String,
    Number,
    Integer,
    Boolean,
    ModelRef,
    DatasetRef,
    List(Box<SemanticType>),
    /// `keys`, when declared, lists the admissible keys in declaration order.
    Dict { keys: Option<Vec<String>> },
    Dataframe(Columns),
}

impl SemanticType {
    pub fn dataframe_dynamic() -> Self {
        SemanticType::Dataframe(Columns::Dynamic)
    }

    pub fn dataframe_with<I, S>(columns: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        SemanticType::Dataframe(Columns::Declared(columns.into_iter().map(Into::into).collect()))
    }

    pub fn list_of(element: SemanticType) -> Self {
        SemanticType::List(Box::new(element))
    }

    /// The kind name used in diagnostics and documents.
    pub fn kind(&self) -> &'static str {
        match self {
            SemanticType::String => "string",
            SemanticType::Number => "number",
            SemanticType::Integer => "integer",
            SemanticType::Boolean => "boolean",
            SemanticType::ModelRef => "model-ref",
            SemanticType::DatasetRef => "dataset-ref",
            SemanticType::List(_) => "list",
            SemanticType::Dict { .. } => "dict",
            SemanticType::Dataframe(_) => "dataframe",
        }
    }

    pub fn is_scalar(&self) -> bool {
        !matches!(
            self,
            SemanticType::List(_) | SemanticType::Dict { .. } | SemanticType::Dataframe(_)
        )
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, SemanticType::Number | SemanticType::Integer)
    }

    /// Columns a target dataframe requires that this (source) dataframe does
    /// not declare. Empty when either side is dynamic or not a dataframe.
    pub fn missing_columns(&self, target: &SemanticType) -> BTreeSet<String> {
        match (self, target) {
            (
                SemanticType::Dataframe(Columns::Declared(have)),
                SemanticType::Dataframe(Columns::Declared(want)),
            ) => want.difference(have).cloned().collect(),
            (SemanticType::List(a), SemanticType::List(b)) => a.missing_columns(b),
            _ => BTreeSet::new(),
        }
    }
}

impl fmt::Display for SemanticType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SemanticType::List(element) => write!(f, "list[{element}]"),
            SemanticType::Dict { keys: Some(keys) } => write!(f, "dict{{{}}}", keys.join(",")),
            SemanticType::Dataframe(Columns::Declared(cols)) => {
                let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
                write!(f, "dataframe{{{}}}", cols.join(","))
            }
            other => f.write_str(other.kind()),
        }
    }
}

/// A type expression that does not match the grammar.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("type syntax error at position {position}: {message} (found `{token}`)")]
pub struct TypeSyntaxError {
    pub token: String,
    pub position: usize,
    pub message: String,
}

pub fn parse_semantic_type(text: &str) -> Result<SemanticType, TypeSyntaxError> {
    let mut parser = TypeParser { chars: text.chars().collect(), pos: 0 };
    if parser.chars.iter().all(|c| c.is_whitespace()) {
        return Err(TypeSyntaxError {
            token: String::new(),
            position: 0,
            message: "empty type expression".into(),
        });
    }
    let ty = parser.parse_type()?;
    parser.skip_ws();
    if parser.pos < parser.chars.len() {
        return Err(parser.error("unexpected trailing input"));
    }
    Ok(ty)
}

fn base_type(word: &str) -> Option<SemanticType> {
    Some(match word {
        "str" | "string" => SemanticType::String,
        "int" | "integer" => SemanticType::Integer,
        "float" | "number" => SemanticType::Number,
        "bool" | "boolean" => SemanticType::Boolean,
        "model-ref" => SemanticType::ModelRef,
        "dataset-ref" => SemanticType::DatasetRef,
        _ => return None,
    })
}

struct TypeParser {
    chars: Vec<char>,
    pos: usize,
}

impl TypeParser {
    fn skip_ws(&mut self) {
        while self.chars.get(self.pos).is_some_and(|c| c.is_whitespace()) {
            self.pos += 1;
        }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn current_token(&self) -> String {
        match self.peek() {
            None => "<end>".to_string(),
            Some(c) if is_word_char(c) => self.chars[self.pos..]
                .iter()
                .take_while(|c| is_word_char(**c))
                .collect(),
            Some(c) => c.to_string(),
        }
    }

    fn error(&self, message: &str) -> TypeSyntaxError {
        TypeSyntaxError { token: self.current_token(), position: self.pos, message: message.to_string() }
    }

    fn word(&mut self) -> Result<(String, usize), TypeSyntaxError> {
        self.skip_ws();
        let start = self.pos;
        while self.peek().is_some_and(is_word_char) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("expected a type name"));
        }
        Ok((self.chars[start..self.pos].iter().collect(), start))
    }

    fn expect(&mut self, c: char) -> Result<(), TypeSyntaxError> {
        self.skip_ws();
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&format!("expected `{c}`")))
        }
    }

    fn parse_type(&mut self) -> Result<SemanticType, TypeSyntaxError> {
        let (word, start) = self.word()?;
        match word.as_str() {
            "list" => {
                self.expect('[')?;
                let (inner, inner_start) = self.word()?;
                let element = base_type(&inner).ok_or_else(|| TypeSyntaxError {
                    token: inner.clone(),
                    position: inner_start,
                    message: "list elements must be a base type".into(),
                })?;
                self.expect(']')?;
                Ok(SemanticType::list_of(element))
            }
            "dict" => {
                let keys = self.name_set()?;
                Ok(SemanticType::Dict { keys })
            }
            "dataframe" => {
                let columns = match self.name_set()? {
                    None => Columns::Dynamic,
                    Some(names) => Columns::Declared(names.into_iter().collect()),
                };
                Ok(SemanticType::Dataframe(columns))
            }
            other => base_type(other).ok_or(TypeSyntaxError {
                token: word.clone(),
                position: start,
                message: "unknown type name".into(),
            }),
        }
    }

    /// Parses an optional `{a,b,...}` suffix. Names must be distinct and the
    /// set non-empty.
    fn name_set(&mut self) -> Result<Option<Vec<String>>, TypeSyntaxError> {
        self.skip_ws();
        if self.peek() != Some('{') {
            return Ok(None);
        }
        self.pos += 1;
        let mut names: Vec<String> = Vec::new();
        loop {
            let (name, at) = self.word()?;
            if names.contains(&name) {
                return Err(TypeSyntaxError {
                    token: name,
                    position: at,
                    message: "duplicate name in set".into(),
                });
            }
            names.push(name);
            self.skip_ws();
            match self.peek() {
                Some(',') => self.pos += 1,
                Some('}') => {
                    self.pos += 1;
                    return Ok(Some(names));
                }
                _ => return Err(self.error("expected `,` or `}`")),
            }
        }
    }
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.'
}

/// Whether a value of `source` may flow into a slot typed `target`.
pub fn types_compatible(source: &SemanticType, target: &SemanticType) -> bool {
    use SemanticType as T;
    match (source, target) {
        (T::Integer, T::Number) => true,
        (T::List(a), T::List(b)) => types_compatible(a, b),
        (T::Dict { .. }, T::Dict { .. }) => true,
        (T::Dataframe(Columns::Dynamic), T::Dataframe(_)) => true,
        (T::Dataframe(_), T::Dataframe(Columns::Dynamic)) => true,
        (T::Dataframe(Columns::Declared(have)), T::Dataframe(Columns::Declared(want))) => {
            want.is_subset(have)
        }
        (a, b) if a.is_scalar() && b.is_scalar() => a == b,
        _ => false,
    }
}
