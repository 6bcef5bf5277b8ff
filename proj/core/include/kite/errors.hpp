#pragma once

#include <stdexcept>
#include <string>

namespace kite {

// Base class for every error thrown by the engine. Each concrete type maps
// to one failure family so callers (and tests) can catch by kind.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Operand dimensions do not line up (matmul, append, RoPE, ...).
class ShapeError : public Error {
public:
    using Error::Error;
};

// A softmax row is entirely masked.
class DegenerateMaskError : public Error {
public:
    using Error::Error;
};

// Bad magic string or unsupported version in a binary file.
class FormatError : public Error {
public:
    using Error::Error;
};

// A binary file is shorter than its header declares.
class LengthError : public Error {
public:
    using Error::Error;
};

// Invalid configuration (retention constraint, layer pattern, ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Token sequence longer than the model context.
class ContextOverflowError : public Error {
public:
    using Error::Error;
};

// Prompt fixed parts (question + template) do not fit in the context.
class PromptOverflowError : public Error {
public:
    using Error::Error;
};

// Token id outside the vocabulary.
class VocabError : public Error {
public:
    using Error::Error;
};

// Search on an index with no entries.
class EmptyIndexError : public Error {
public:
    using Error::Error;
};

// Chunk plan inconsistent with the document it is applied to.
class PlanError : public Error {
public:
    using Error::Error;
};

// Non-finite value produced inside an attention computation.
class NumericError : public Error {
public:
    using Error::Error;
};

// Malformed dataset record (missing field, wrong type).
class SchemaError : public Error {
public:
    using Error::Error;
};

// Document empty or otherwise unusable for the two-pass pipeline.
class PipelineError : public Error {
public:
    using Error::Error;
};

}  // namespace kite
