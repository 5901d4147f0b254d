#pragma once

#include <cstdint>
#include <map>
#include <string>

#include <json.hpp>

#include "vicnet/nn/graph.hpp"
#include "vicnet/nn/params.hpp"

namespace vicnet::nn {

// Per-signal standardization constants, keyed by signal id
// ("i", "v" input channels; "q_cc", "v_cc", "ic" output channels; feature ids).
struct NormEntry {
    double mean = 0.0;
    double stddev = 1.0;
};
using NormMap = std::map<std::string, NormEntry>;

// Self-describing model container: JSON header (graph, shapes, normalization
// constants, calibration metadata, seed, format version) followed by the raw
// little-endian float32 parameter payload.
struct Checkpoint {
    ModelGraph graph;
    ParamStore params;
    NormMap norm;
    nlohmann::json meta;     // preprocessing calibration: n_nn, delta_q_ah, soc ranges, ...
    std::uint64_t seed = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

} // namespace vicnet::nn
