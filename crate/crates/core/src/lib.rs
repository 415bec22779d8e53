pub mod corpus;
pub mod unigram;
pub mod bpe;
pub mod preprocess;
pub mod seqprep;
