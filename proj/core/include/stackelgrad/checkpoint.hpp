#pragma once

#include <string>

#include "stackelgrad/models.hpp"

namespace stackelgrad {

// Checkpoint file = 8-byte magic, little-endian u32 header length, JSON header
// (dims, budget, activation, seed, format version), then the parameter block
// as little-endian 64-bit floats in ParamVector order. Round-trips bit-exact.
void save_generator(const PerturbationGenerator& gen, const std::string& path);
PerturbationGenerator load_generator(const std::string& path);

void save_classifier(const MlpClassifier& model, const std::string& path);
MlpClassifier load_classifier(const std::string& path);

}  // namespace stackelgrad
