#include <fstream>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "tinyembed/checkpoint.hpp"

using namespace tinyembed;

TEST_CASE("tensor container round trips names, shapes, values and meta") {
    testsupport::TempDir dir("ckpt");
    TensorFile file;
    Matrix m(3, 4);
    std::mt19937_64 rng(5);
    std::normal_distribution<double> gauss;
    for (double& v : m.data) {
        v = gauss(rng);
    }
    Vector vec = {1.0, -2.5, 3.25};
    file.put("layers.0.q", m);
    file.put("final_norm", vec);
    file.meta["kind"] = "model";

    save_tensor_file(file, dir.file("a.ntc"));
    TensorFile loaded = load_tensor_file(dir.file("a.ntc"));

    CHECK(loaded.meta.at("kind") == "model");
    CHECK(loaded.get_matrix("layers.0.q", 3, 4).data == m.data);
    CHECK(loaded.get_vector("final_norm", 3) == vec);
}

TEST_CASE("tensor container rejects wrong shapes and missing names") {
    testsupport::TempDir dir("ckpt");
    TensorFile file;
    file.put("w", Matrix(2, 2));
    save_tensor_file(file, dir.file("b.ntc"));
    TensorFile loaded = load_tensor_file(dir.file("b.ntc"));
    CHECK_THROWS(loaded.get_matrix("w", 2, 3));
    CHECK_THROWS(loaded.get_matrix("missing", 2, 2));
}

TEST_CASE("loading a non-container file fails cleanly") {
    testsupport::TempDir dir("ckpt");
    {
        std::ofstream f(dir.file("junk.ntc"), std::ios::binary);
        f << "not a tensor file";
    }
    CHECK_THROWS(load_tensor_file(dir.file("junk.ntc")));
    CHECK_THROWS(load_tensor_file(dir.file("does_not_exist.ntc")));
}

TEST_CASE("save is byte-stable for identical content") {
    testsupport::TempDir dir("ckpt");
    TensorFile file;
    Matrix m(2, 5);
    for (size_t i = 0; i < m.data.size(); ++i) {
        m.data[i] = 0.1 * static_cast<double>(i);
    }
    file.put("t", m);
    save_tensor_file(file, dir.file("one.ntc"));
    save_tensor_file(file, dir.file("two.ntc"));

    auto read_all = [](const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
    };
    CHECK(read_all(dir.file("one.ntc")) == read_all(dir.file("two.ntc")));
}
