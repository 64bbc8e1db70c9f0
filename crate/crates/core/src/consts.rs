/// Faraday constant, C/mol.
pub const FARADAY: f64 = 96487.0;
/// Universal gas constant, J/(mol K).
pub const GAS_CONSTANT: f64 = 8.31;
/// Default ambient temperature, K.
pub const DEFAULT_AMBIENT: f64 = 298.15;
/// Stoichiometries are clamped into `[STOICH_CLAMP, 1 - STOICH_CLAMP]` before kinetics.
pub const STOICH_CLAMP: f64 = 1e-6;
