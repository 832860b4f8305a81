#pragma once

#include <string>

#include "covdet/net.hpp"

namespace covdet {

/// A trained regressor: architecture, head, input-normalisation flag and
/// parameters, plus free-form training metadata carried in the file header.
struct Model {
    NetworkSpec spec;
    Head head = Head::Translation;
    bool normalize_input = true;
    Parameters params;
    std::string meta_json = "{}";  // training metadata, JSON object
};

/// File format: magic "CVDT", format version (u32 LE), JSON header length
/// (u32 LE), UTF-8 JSON header, then raw 32-bit LE floats in layer order,
/// weights before biases per conv layer.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace covdet
