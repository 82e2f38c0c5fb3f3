//! Front end for the `gmlpnp` binary: the solve-input JSON schema and the
//! subcommand implementations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod schema;
