pub mod difficulty_world;
pub mod format_oracle;
pub mod policy_oracle;
