pub mod abe;
pub mod chameleon;
pub mod cli;
pub mod encoding;
pub mod keys;
pub mod ledger;
pub mod protocol;
pub mod pss;
pub mod template;
pub mod voting;
