#pragma once

#include <stdexcept>
#include <string>

namespace alchemist {

/// Base class for every error raised by the pipeline library.
class PipelineError : public std::runtime_error {
public:
    explicit PipelineError(const std::string& msg) : std::runtime_error(msg) {}
};

class UnknownFormat : public PipelineError {
public:
    explicit UnknownFormat(const std::string& format)
        : PipelineError("unknown dataset format: " + format) {}
};

class TokenizerUnavailable : public PipelineError {
public:
    explicit TokenizerUnavailable(const std::string& id)
        : PipelineError("tokenizer not registered: " + id) {}
};

class DimensionMismatch : public PipelineError {
public:
    DimensionMismatch(size_t a, size_t b)
        : PipelineError("vector dimensions differ: " + std::to_string(a) + " vs " +
                        std::to_string(b)) {}
};

class ZeroVector : public PipelineError {
public:
    ZeroVector() : PipelineError("cosine undefined for zero-norm vector") {}
};

class ParseFailure : public PipelineError {
public:
    explicit ParseFailure(const std::string& why) : PipelineError("parse failure: " + why) {}
};

class ExecutorUnavailable : public PipelineError {
public:
    explicit ExecutorUnavailable(const std::string& language)
        : PipelineError("no executor registered for language: " + language) {}
};

class ProviderError : public PipelineError {
public:
    explicit ProviderError(const std::string& why) : PipelineError("provider error: " + why) {}
};

/// Transient provider failure (rate limit, 5xx, flaky transport). The gateway
/// retries these; callers outside the gateway normally never see one.
class TransientProviderError : public ProviderError {
public:
    explicit TransientProviderError(const std::string& why) : ProviderError(why) {}
};

class BudgetExceeded : public PipelineError {
public:
    explicit BudgetExceeded(const std::string& why) : PipelineError("budget exceeded: " + why) {}
};

class NoLogprobSupport : public PipelineError {
public:
    explicit NoLogprobSupport(const std::string& provider)
        : PipelineError("provider does not expose token logprobs: " + provider) {}
};

class EmbedderUnavailable : public PipelineError {
public:
    EmbedderUnavailable() : PipelineError("no embedder configured") {}
};

class UnknownSampleId : public PipelineError {
public:
    explicit UnknownSampleId(const std::string& id)
        : PipelineError("record references unknown sample id: " + id) {}
};

class DegenerateEvolution : public PipelineError {
public:
    explicit DegenerateEvolution(const std::string& id)
        : PipelineError("evolved instruction is identical to the original for sample: " + id) {}
};

class UnmappableFlag : public PipelineError {
public:
    explicit UnmappableFlag(const std::string& why)
        : PipelineError("no filtering-task category for verdict: " + why) {}
};

class InsufficientData : public PipelineError {
public:
    explicit InsufficientData(const std::string& why) : PipelineError(why) {}
};

class EmptyMix : public PipelineError {
public:
    EmptyMix() : PipelineError("mix produced no samples (zero weights or empty inputs)") {}
};

/// Raised on config-schema violations. `key_path` points at the offending key,
/// e.g. "decontam.jaccard_threshold".
class ConfigInvalid : public PipelineError {
public:
    ConfigInvalid(const std::string& key_path, const std::string& why)
        : PipelineError("invalid config at '" + key_path + "': " + why), key_path(key_path) {}
    std::string key_path;
};

class StageFailure : public PipelineError {
public:
    StageFailure(const std::string& stage, const std::string& why)
        : PipelineError("stage '" + stage + "' failed: " + why), stage(stage) {}
    std::string stage;
};

}  // namespace alchemist
