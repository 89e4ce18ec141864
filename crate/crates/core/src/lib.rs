pub mod classify;
pub mod corpus;
pub mod datasets;
pub mod evaluate;
pub mod query;
pub mod tokenizer;
