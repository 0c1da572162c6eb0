#pragma once

// Shared between the backend front end and the two implementations.

#include <functional>
#include <memory>
#include <vector>

#include "sexid/backends.hpp"

namespace sexid::detail {

using ScorerObserver = std::function<void(int epoch, std::shared_ptr<const Scorer>)>;

/// Training examples with their label index, in dataset order.
struct LabeledBatch {
    std::vector<const Example*> examples;
    std::vector<int> labels;
};

std::shared_ptr<const Scorer> fit_baseline(const BackendSpec& spec, const LabeledBatch& data, const HyperParams& hp,
                                           const LabelSpace& labels, const ScorerObserver& on_epoch);
std::shared_ptr<const Scorer> load_baseline(const BackendSpec& spec, const LabelSpace& labels,
                                            const std::filesystem::path& dir);

std::shared_ptr<const Scorer> fit_transformer(const BackendSpec& spec, const LabeledBatch& data,
                                              const HyperParams& hp, const LabelSpace& labels,
                                              const ScorerObserver& on_epoch);
std::shared_ptr<const Scorer> load_transformer(const BackendSpec& spec, const LabelSpace& labels,
                                               const std::filesystem::path& dir);

/// Hash of the checkpoint files a transformer spec refers to; empty for the
/// baseline and for random encoders.
std::string checkpoint_digest(const BackendSpec& spec);

}  // namespace sexid::detail
