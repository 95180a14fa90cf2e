#include "tabitd/model_io.hpp"

#include <string>

#include "tabitd/errors.hpp"
#include "tabitd/io.hpp"

namespace tabitd::model_io {

namespace {

constexpr char kMagic[4] = {'T', 'I', 'M', 'D'};
constexpr std::uint32_t kVersion = 1;

void write_config(std::ostream& os, const encoder::EncoderConfig& c) {
    io::write_u64(os, c.n_steps);
    io::write_u64(os, c.n_d);
    io::write_u64(os, c.n_a);
    io::write_f64(os, c.gamma);
    io::write_f64(os, c.lambda_sparse);
    io::write_u64(os, c.shared_layers);
    io::write_u64(os, c.step_layers);
    io::write_f64(os, c.eps_sparse);
    io::write_f64(os, c.bn_momentum);
    io::write_f64(os, c.bn_eps);
    io::write_u64(os, c.n_classes);
    io::write_u8(os, c.final_bias ? 1 : 0);
}

encoder::EncoderConfig read_config(std::istream& is) {
    encoder::EncoderConfig c;
    c.n_steps = io::read_u64(is);
    c.n_d = io::read_u64(is);
    c.n_a = io::read_u64(is);
    c.gamma = io::read_f64(is);
    c.lambda_sparse = io::read_f64(is);
    c.shared_layers = io::read_u64(is);
    c.step_layers = io::read_u64(is);
    c.eps_sparse = io::read_f64(is);
    c.bn_momentum = io::read_f64(is);
    c.bn_eps = io::read_f64(is);
    c.n_classes = io::read_u64(is);
    c.final_bias = io::read_u8(is) != 0;
    return c;
}

} // namespace

void write_model(std::ostream& os, const ModelBundle& b) {
    io::write_magic(os, kMagic);
    io::write_u32(os, kVersion);

    std::string schema_json = b.schema.to_json();
    io::write_string(os, schema_json);
    io::write_u64(os, b.schema.fingerprint());

    io::write_u8(os, b.phase.pretrained ? 1 : 0);
    io::write_u8(os, b.phase.supervised ? 1 : 0);
    io::write_u64(os, b.seed);
    io::write_string(os, b.config_echo);

    write_config(os, b.model.cfg);
    io::write_u64(os, b.model.input_dim);

    std::uint64_t n_params = 0, n_bn = 0;
    b.model.params.visit([&](const nn::ParamBlock&) { ++n_params; });
    b.model.params.visit_bn([&](const nn::BnStats&) { ++n_bn; });
    io::write_u64(os, n_params);
    b.model.params.visit([&](const nn::ParamBlock& p) { io::write_tensor(os, p.value); });
    io::write_u64(os, n_bn);
    b.model.params.visit_bn([&](const nn::BnStats& s) {
        io::write_f64_span(os, s.running_mean);
        io::write_f64_span(os, s.running_var);
        io::write_f64(os, s.momentum);
        io::write_f64(os, s.eps);
    });
}

ModelBundle read_model(std::istream& is) {
    io::expect_magic(is, kMagic, "model");
    std::uint32_t version = io::read_u32(is);
    if (version != kVersion)
        throw IoError("unsupported model container version " + std::to_string(version));

    ModelBundle b;
    std::string schema_json = io::read_string(is);
    b.schema = fusion::FusionSchema::from_json(schema_json);
    std::uint64_t stored_fp = io::read_u64(is);
    if (stored_fp != b.schema.fingerprint())
        throw IoError("model file is corrupt: schema fingerprint does not match its schema");

    b.phase.pretrained = io::read_u8(is) != 0;
    b.phase.supervised = io::read_u8(is) != 0;
    b.seed = io::read_u64(is);
    b.config_echo = io::read_string(is);

    encoder::EncoderConfig cfg = read_config(is);
    cfg.validate();
    std::uint64_t input_dim = io::read_u64(is);

    // Build the parameter structure, then overwrite every tensor in order.
    b.model = encoder::TabnetModel(cfg, input_dim, 0);
    std::uint64_t n_params = io::read_u64(is);
    std::uint64_t expected = 0;
    b.model.params.visit([&](const nn::ParamBlock&) { ++expected; });
    if (n_params != expected)
        throw IoError("model file holds " + std::to_string(n_params) + " tensors, expected " +
                      std::to_string(expected));
    b.model.params.visit([&](nn::ParamBlock& p) {
        Tensor2 t = io::read_tensor(is);
        if (t.rows != p.value.rows || t.cols != p.value.cols)
            throw IoError("model tensor shape " + t.shape_str() + " does not match " +
                          p.value.shape_str());
        p.value = std::move(t);
    });
    std::uint64_t n_bn = io::read_u64(is);
    expected = 0;
    b.model.params.visit_bn([&](const nn::BnStats&) { ++expected; });
    if (n_bn != expected)
        throw IoError("model file holds " + std::to_string(n_bn) + " BN blocks, expected " +
                      std::to_string(expected));
    b.model.params.visit_bn([&](nn::BnStats& s) {
        auto mean = io::read_f64_vec(is);
        auto var = io::read_f64_vec(is);
        if (mean.size() != s.running_mean.size() || var.size() != s.running_var.size())
            throw IoError("model BN statistics width mismatch");
        s.running_mean = std::move(mean);
        s.running_var = std::move(var);
        s.momentum = io::read_f64(is);
        s.eps = io::read_f64(is);
    });
    return b;
}

void save_model(const ModelBundle& b, const std::filesystem::path& path) {
    auto os = io::open_out(path);
    write_model(os, b);
    os.flush();
    if (!os) throw IoError("failed writing model to " + path.string());
}

ModelBundle load_model(const std::filesystem::path& path) {
    auto is = io::open_in(path);
    return read_model(is);
}

void require_same_schema(const ModelBundle& b, const fusion::FusionSchema& dataset_schema) {
    std::uint64_t have = dataset_schema.fingerprint();
    std::uint64_t want = b.schema.fingerprint();
    if (have != want)
        throw FingerprintMismatchError(
            "dataset schema fingerprint " + std::to_string(have) +
            " does not match the model's " + std::to_string(want) +
            "; refuse to score across schema drift");
}

} // namespace tabitd::model_io
