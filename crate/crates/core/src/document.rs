//! Versioned JSON document for certificates.
//!
//! Polynomials are stored in the text grammar of [`crate::poly`], whose
//! printer round-trips every coefficient exactly. The document embeds the
//! system so that a certificate can be re-verified on its own.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poly::{PolyError, PolyMatrix, Polynomial};
use crate::synthesis::{CcmCertificate, Domain, Mode, SynthesisDiagnostics, VerificationReport};
use crate::system::{ControlAffineSystem, SystemError};

pub const FORMAT: &str = "ccm-certificate";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("not a certificate document (format {0:?})")]
    Format(String),
    #[error("unsupported certificate version {found}; this build reads version {VERSION}")]
    Version { found: u32 },
    #[error("in {field}: {source}")]
    Poly {
        field: String,
        #[source]
        source: PolyError,
    },
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("inconsistent document: {0}")]
    Inconsistent(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub n: usize,
    pub m: usize,
    pub f: Vec<String>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
}

impl SystemSpec {
    pub fn from_system(sys: &ControlAffineSystem) -> Self {
        SystemSpec {
            n: sys.n(),
            m: sys.m(),
            f: (0..sys.n()).map(|i| sys.drift().get(i, 0).to_string()).collect(),
            b: matrix_rows(sys.input_matrix()),
        }
    }

    pub fn to_system(&self) -> Result<ControlAffineSystem, DocumentError> {
        if self.f.len() != self.n {
            return Err(DocumentError::Inconsistent(format!(
                "system declares n = {} but lists {} drift entries",
                self.n,
                self.f.len()
            )));
        }
        let b = rows_matrix(&self.b, self.n, self.m, "B")?;
        let f: Vec<&str> = self.f.iter().map(String::as_str).collect();
        Ok(ControlAffineSystem::from_strings(&f, b)?)
    }
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Dense matrix from row arrays; an `r×0` matrix may be written as `r`
/// empty rows.
pub fn rows_matrix(rows: &[Vec<f64>], r: usize, c: usize, name: &str) -> Result<DMatrix<f64>, DocumentError> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(DocumentError::Inconsistent(format!("{name} must be {r}x{c}")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateDocument {
    pub format: String,
    pub version: u32,
    pub system: SystemSpec,
    pub domain: Domain,
    pub mode: Mode,
    pub lambda: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub epsilon: f64,
    #[serde(rename = "W")]
    pub w: Vec<Vec<String>>,
    pub rho: String,
    #[serde(rename = "Q", default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(rename = "R", default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<Vec<f64>>>,
    pub solver_margin: f64,
    #[serde(default)]
    pub verification: Option<VerificationReport>,
    #[serde(default)]
    pub diagnostics: Option<SynthesisDiagnostics>,
}

impl CertificateDocument {
    pub fn new(sys: &ControlAffineSystem, cert: &CcmCertificate) -> Self {
        let n = cert.n();
        CertificateDocument {
            format: FORMAT.into(),
            version: VERSION,
            system: SystemSpec::from_system(sys),
            domain: cert.domain.clone(),
            mode: cert.mode,
            lambda: cert.lambda,
            alpha1: cert.alpha1,
            alpha2: cert.alpha2,
            epsilon: cert.epsilon,
            w: (0..n)
                .map(|i| (0..n).map(|j| cert.w.get(i, j).to_string()).collect())
                .collect(),
            rho: cert.rho.to_string(),
            q: cert.q.as_ref().map(matrix_rows),
            r: cert.r.as_ref().map(matrix_rows),
            solver_margin: cert.solver_margin,
            verification: cert.verification.clone(),
            diagnostics: cert.diagnostics.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DocumentError> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        let format = raw.get("format").and_then(|v| v.as_str()).unwrap_or("");
        if format != FORMAT {
            return Err(DocumentError::Format(format.to_string()));
        }
        let version = raw.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if version != VERSION {
            return Err(DocumentError::Version { found: version });
        }
        Ok(serde_json::from_value(raw)?)
    }

    pub fn decode(&self) -> Result<(ControlAffineSystem, CcmCertificate), DocumentError> {
        let sys = self.system.to_system()?;
        let n = sys.n();
        if self.w.len() != n || self.w.iter().any(|r| r.len() != n) || self.domain.dim() != n {
            return Err(DocumentError::Inconsistent(format!("W and domain must match n = {n}")));
        }
        let parse = |s: &str, field: String| {
            Polynomial::parse(s, n).map_err(|source| DocumentError::Poly { field, source })
        };
        let mut entries = Vec::with_capacity(n * n);
        for (i, row) in self.w.iter().enumerate() {
            for (j, s) in row.iter().enumerate() {
                entries.push(parse(s, format!("W[{}][{}]", i + 1, j + 1))?);
            }
        }
        let w = PolyMatrix::from_entries(n, n, entries).map_err(|source| DocumentError::Poly {
            field: "W".into(),
            source,
        })?;
        if !w.is_symmetric() {
            return Err(DocumentError::Inconsistent("W is not symmetric".into()));
        }
        let rho = parse(&self.rho, "rho".into())?;
        let q = self.q.as_ref().map(|q| rows_matrix(q, n, n, "Q")).transpose()?;
        let r = self.r.as_ref().map(|r| rows_matrix(r, sys.m(), sys.m(), "R")).transpose()?;
        self.domain
            .validate()
            .map_err(|e| DocumentError::Inconsistent(e.to_string()))?;
        let cert = CcmCertificate {
            w,
            rho,
            lambda: self.lambda,
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            epsilon: self.epsilon,
            domain: self.domain.clone(),
            mode: self.mode,
            q,
            r,
            solver_margin: self.solver_margin,
            verification: self.verification.clone(),
            diagnostics: self.diagnostics.clone(),
        };
        Ok((sys, cert))
    }
}

pub fn certificate_to_json(sys: &ControlAffineSystem, cert: &CcmCertificate) -> String {
    CertificateDocument::new(sys, cert).to_json()
}

pub fn certificate_from_json(text: &str) -> Result<(ControlAffineSystem, CcmCertificate), DocumentError> {
    CertificateDocument::from_json(text)?.decode()
}
