use std::collections::BTreeSet;
use std::fmt::Display;

use crate::error::{Error, Result};
use crate::glm::DesignMatrix;

pub const INTERCEPT: &str = "(intercept)";

/// Named numeric columns of equal length.
#[derive(Debug, Clone, Default)]
pub struct Frame {
    pub n: usize,
    names: Vec<String>,
    cols: Vec<Vec<f64>>,
}

impl Frame {
    pub fn new(n: usize) -> Self {
        Frame { n, names: Vec::new(), cols: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, values: Vec<f64>) {
        let name = name.into();
        assert_eq!(values.len(), self.n, "column `{name}` has the wrong length");
        match self.names.iter().position(|x| *x == name) {
            Some(j) => self.cols[j] = values,
            None => {
                self.names.push(name);
                self.cols.push(values);
            }
        }
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|x| x == name).map(|j| self.cols[j].as_slice())
    }

    pub fn has(&self, name: &str) -> bool {
        self.names.iter().any(|x| x == name)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Adds one indicator per level except the first (sorted) level; returns the new column names.
    pub fn add_dummies<T: Ord + Display>(&mut self, prefix: &str, labels: &[T]) -> Vec<String> {
        let levels: BTreeSet<&T> = labels.iter().collect();
        let mut out = Vec::new();
        for level in levels.into_iter().skip(1) {
            let name = format!("{prefix}[{level}]");
            self.add(name.clone(), labels.iter().map(|l| (l == level) as u8 as f64).collect());
            out.push(name);
        }
        out
    }

    pub fn subset(&self, rows: &[usize]) -> Frame {
        Frame {
            n: rows.len(),
            names: self.names.clone(),
            cols: self.cols.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect(),
        }
    }
}

/// A product of frame columns; a single factor is a main effect.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub factors: Vec<String>,
}

impl Term {
    pub fn main(name: &str) -> Term {
        Term { factors: vec![name.to_string()] }
    }

    pub fn interaction(names: &[&str]) -> Term {
        Term { factors: names.iter().map(|s| s.to_string()).collect() }
    }

    pub fn name(&self) -> String {
        self.factors.join(":")
    }

    pub fn involves(&self, var: &str) -> bool {
        self.factors.iter().any(|f| f == var)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Formula {
    pub intercept: bool,
    pub terms: Vec<Term>,
}

impl Formula {
    pub fn with_intercept() -> Formula {
        Formula { intercept: true, terms: Vec::new() }
    }

    pub fn push(&mut self, t: Term) {
        if !self.terms.contains(&t) {
            self.terms.push(t);
        }
    }

    pub fn push_main<S: AsRef<str>>(&mut self, names: &[S]) {
        for n in names {
            self.push(Term::main(n.as_ref()));
        }
    }

    pub fn names(&self) -> Vec<String> {
        let mut v = Vec::with_capacity(self.terms.len() + 1);
        if self.intercept {
            v.push(INTERCEPT.to_string());
        }
        v.extend(self.terms.iter().map(Term::name));
        v
    }

    pub fn ncols(&self) -> usize {
        self.terms.len() + self.intercept as usize
    }

    pub fn remove(&mut self, name: &str) -> bool {
        let before = self.terms.len();
        self.terms.retain(|t| t.name() != name);
        before != self.terms.len()
    }

    pub fn check(&self, frame: &Frame) -> Result<()> {
        for t in &self.terms {
            for f in &t.factors {
                if !frame.has(f) {
                    return Err(Error::Config(format!("unknown variable `{f}` in term `{}`", t.name())));
                }
            }
        }
        Ok(())
    }

    /// Evaluates one design row, with some variables replaced by fixed values.
    pub fn row_into(&self, frame: &Frame, i: usize, overrides: &[(&str, f64)], out: &mut Vec<f64>) {
        out.clear();
        if self.intercept {
            out.push(1.0);
        }
        for t in &self.terms {
            let mut v = 1.0;
            for f in &t.factors {
                v *= match overrides.iter().find(|(n, _)| n == f) {
                    Some((_, x)) => *x,
                    None => frame.get(f).expect("formula checked against frame")[i],
                };
            }
            out.push(v);
        }
    }

    pub fn build(&self, frame: &Frame) -> Result<DesignMatrix> {
        self.check(frame)?;
        let cols: Vec<(Vec<&[f64]>, usize)> = self
            .terms
            .iter()
            .map(|t| (t.factors.iter().map(|f| frame.get(f).unwrap()).collect(), t.factors.len()))
            .collect();
        let p = self.ncols();
        let mut data = Vec::with_capacity(frame.n * p);
        for i in 0..frame.n {
            if self.intercept {
                data.push(1.0);
            }
            for (fs, _) in &cols {
                data.push(fs.iter().map(|c| c[i]).product());
            }
        }
        DesignMatrix::new(self.names(), data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dummies_drop_first_level() {
        let mut f = Frame::new(4);
        let names = f.add_dummies("org", &["b", "a", "c", "a"]);
        assert_eq!(names, vec!["org[b]", "org[c]"]);
        assert_eq!(f.get("org[b]").unwrap(), &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(Frame::new(3).add_dummies("c", &[10u32, 2, 9]), vec!["c[9]", "c[10]"]);
    }

    #[test]
    fn interaction_rows_and_overrides() {
        let mut f = Frame::new(2);
        f.add("a", vec![1.0, 0.0]);
        f.add("s", vec![0.5, 0.25]);
        let mut fm = Formula::with_intercept();
        fm.push(Term::main("a"));
        fm.push(Term::main("s"));
        fm.push(Term::interaction(&["a", "s"]));
        let x = fm.build(&f).unwrap();
        assert_eq!(x.row(0), &[1.0, 1.0, 0.5, 0.5]);
        let mut buf = Vec::new();
        fm.row_into(&f, 1, &[("a", 1.0)], &mut buf);
        assert_eq!(buf, vec![1.0, 1.0, 0.25, 0.25]);
        assert_eq!(x.names[3], "a:s");
    }
}
