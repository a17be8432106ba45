#include "tinyembed/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little, "container stores raw little-endian data");

namespace tinyembed {

namespace {

constexpr char kMagic[8] = {'T', 'E', 'N', 'S', 'O', 'R', 'S', '1'};

int64_t element_count(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 0) {
            throw std::runtime_error("tensor file: negative dimension");
        }
        n *= d;
    }
    return n;
}

}  // namespace

const NamedTensor& TensorFile::get(const std::string& name, const std::vector<int64_t>& expect_shape) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) {
        throw std::runtime_error("tensor file: missing tensor '" + name + "'");
    }
    if (it->second.shape != expect_shape) {
        throw std::runtime_error("tensor file: shape mismatch for '" + name + "'");
    }
    return it->second;
}

void TensorFile::put(const std::string& name, const Matrix& m) {
    tensors[name] = NamedTensor{{m.rows, m.cols}, m.data};
}

void TensorFile::put(const std::string& name, const Vector& v) {
    tensors[name] = NamedTensor{{static_cast<int64_t>(v.size())}, v};
}

Matrix TensorFile::get_matrix(const std::string& name, int rows, int cols) const {
    const NamedTensor& t = get(name, {rows, cols});
    Matrix m(rows, cols);
    m.data = t.values;
    return m;
}

Vector TensorFile::get_vector(const std::string& name, int size) const {
    return get(name, {size}).values;
}

void save_tensor_file(const TensorFile& file, const std::string& path) {
    nlohmann::json header;
    header["tensors"] = nlohmann::json::array();
    int64_t offset = 0;
    for (const auto& [name, tensor] : file.tensors) {
        nlohmann::json entry;
        entry["name"] = name;
        entry["dtype"] = "f64";
        entry["shape"] = tensor.shape;
        entry["offset"] = offset;
        header["tensors"].push_back(entry);
        offset += element_count(tensor.shape) * static_cast<int64_t>(sizeof(double));
    }
    header["meta"] = file.meta;

    const std::string header_str = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("save_tensor_file: cannot open " + path);
    }
    out.write(kMagic, sizeof(kMagic));
    const uint64_t header_len = header_str.size();
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    for (const auto& [name, tensor] : file.tensors) {
        (void)name;
        out.write(reinterpret_cast<const char*>(tensor.values.data()),
                  static_cast<std::streamsize>(tensor.values.size() * sizeof(double)));
    }
    if (!out) {
        throw std::runtime_error("save_tensor_file: write failed for " + path);
    }
}

TensorFile load_tensor_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("load_tensor_file: cannot open " + path);
    }
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw std::runtime_error("load_tensor_file: bad magic in " + path);
    }
    uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    if (!in || header_len > (1ULL << 30)) {
        throw std::runtime_error("load_tensor_file: bad header length in " + path);
    }
    std::string header_str(header_len, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(header_len));
    if (!in) {
        throw std::runtime_error("load_tensor_file: truncated header in " + path);
    }
    nlohmann::json header = nlohmann::json::parse(header_str);

    TensorFile file;
    if (header.contains("meta")) {
        for (auto& [k, v] : header["meta"].items()) {
            file.meta[k] = v.get<std::string>();
        }
    }
    const std::streampos data_start = in.tellg();
    for (const auto& entry : header["tensors"]) {
        const std::string name = entry["name"].get<std::string>();
        if (entry["dtype"].get<std::string>() != "f64") {
            throw std::runtime_error("load_tensor_file: unsupported dtype for '" + name + "'");
        }
        NamedTensor tensor;
        tensor.shape = entry["shape"].get<std::vector<int64_t>>();
        const int64_t count = element_count(tensor.shape);
        tensor.values.resize(static_cast<size_t>(count));
        in.seekg(data_start + static_cast<std::streamoff>(entry["offset"].get<int64_t>()));
        in.read(reinterpret_cast<char*>(tensor.values.data()),
                static_cast<std::streamsize>(count * static_cast<int64_t>(sizeof(double))));
        if (!in) {
            throw std::runtime_error("load_tensor_file: truncated data for '" + name + "'");
        }
        file.tensors[name] = std::move(tensor);
    }
    return file;
}

}  // namespace tinyembed
