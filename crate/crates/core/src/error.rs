use crate::assembly::AssemblyError;
use crate::calderon::CalderonError;
use crate::deflation::DeflationError;
use crate::linalg::LinalgError;
use crate::mesh::gmsh::GmshError;
use crate::mesh::MeshError;
use crate::spectral::SpectralError;

/// Any failure of the toolkit, tagged with the module it came from.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Gmsh(#[from] GmshError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Calderon(#[from] CalderonError),
    #[error(transparent)]
    Deflation(#[from] DeflationError),
}

impl Error {
    pub fn module(&self) -> &'static str {
        match self {
            Error::Mesh(_) | Error::Gmsh(_) => "mesh",
            Error::Assembly(_) => "assembly",
            Error::Linalg(_) => "linalg",
            Error::Spectral(_) => "spectral",
            Error::Calderon(_) => "calderon",
            Error::Deflation(_) => "deflation",
        }
    }

    /// Qualified error name, e.g. `SpectralError::CoercivityFailure`.
    pub fn name(&self) -> String {
        let (ty, inner) = match self {
            Error::Mesh(e) => ("MeshError", format!("{e:?}")),
            Error::Gmsh(e) => ("GmshError", format!("{e:?}")),
            Error::Assembly(e) => ("AssemblyError", format!("{e:?}")),
            Error::Linalg(e) => ("LinalgError", format!("{e:?}")),
            Error::Spectral(e) => ("SpectralError", format!("{e:?}")),
            Error::Calderon(e) => ("CalderonError", format!("{e:?}")),
            Error::Deflation(e) => ("DeflationError", format!("{e:?}")),
        };
        let variant: String = inner.chars().take_while(|c| c.is_alphanumeric() || *c == '_').collect();
        format!("{ty}::{variant}")
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
