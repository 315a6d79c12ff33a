//! Spectral simulation of the one-dimensional Landau–Pekar equations in the
//! strong-coupling limit, with the diagnostics needed to compare solutions
//! against their adiabatic description.
//!
//! The guide under `book/` walks through the modules in order; its code
//! blocks are compiled as doc-tests of this crate.

// `!(x > 0.0)` also rejects NaN; index loops mirror the formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod grid;
pub mod interp;
pub mod io;
pub mod potentials;

pub mod spectral;

pub mod lp;
pub mod reference;

pub mod adiabatic;
pub mod dispersive;

pub mod decomposition;

macro_rules! book_chapters {
    ($($name:ident => $file:literal),* $(,)?) => {
        $(
            #[cfg(doctest)]
            #[doc = include_str!(concat!("../../../book/src/", $file))]
            pub struct $name;
        )*
    };
}

book_chapters! {
    BookIntroduction => "introduction.md",
    BookGrid => "grid.md",
    BookGroundStates => "ground_states.md",
    BookCoupledDynamics => "coupled_dynamics.md",
    BookReference => "reference.md",
    BookAdiabatic => "adiabatic.md",
    BookDispersive => "dispersive.md",
    BookDecomposition => "decomposition.md",
    BookCli => "cli.md",
}
