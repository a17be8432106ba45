// Named-tensor container: a JSON header listing (name, dtype, shape, byte
// offset) followed by raw little-endian tensor data. Model checkpoints use
// names `embedding`, `layers.<i>.<site>`, `final_norm`; adapter checkpoints
// use `lora.<layer>.<site>.A/B` plus rank/alpha/sites in the meta block.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tinyembed/tensor.hpp"

namespace tinyembed {

struct NamedTensor {
    std::vector<int64_t> shape;
    std::vector<double> values;  // row-major
};

struct TensorFile {
    std::map<std::string, NamedTensor> tensors;
    std::map<std::string, std::string> meta;  // small string key/values

    bool has(const std::string& name) const { return tensors.count(name) != 0; }

    // Throws when missing or when the shape disagrees.
    const NamedTensor& get(const std::string& name, const std::vector<int64_t>& expect_shape) const;

    void put(const std::string& name, const Matrix& m);
    void put(const std::string& name, const Vector& v);

    Matrix get_matrix(const std::string& name, int rows, int cols) const;
    Vector get_vector(const std::string& name, int size) const;
};

void save_tensor_file(const TensorFile& file, const std::string& path);
TensorFile load_tensor_file(const std::string& path);

}  // namespace tinyembed
