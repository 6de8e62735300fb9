#include "stackelgrad/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>

#include "io_util.hpp"
#include "json.hpp"
#include "stackelgrad/errors.hpp"

namespace stackelgrad {

namespace {

constexpr char kMagic[8] = {'S', 'G', 'C', 'K', 'P', 'T', '1', '\n'};

void put_u32_le(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

void put_f64_le(std::string& out, double d) {
    std::uint64_t v = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

std::string encode(const nlohmann::json& header, const ParamVector& params) {
    std::string out(kMagic, sizeof(kMagic));
    std::string hdr = header.dump();
    put_u32_le(out, static_cast<std::uint32_t>(hdr.size()));
    out += hdr;
    for (const Tensor& t : params.tensors())
        for (double d : t.data) put_f64_le(out, d);
    return out;
}

struct Decoded {
    nlohmann::json header;
    std::vector<double> flat;
};

Decoded decode(const std::string& bytes, const std::string& path) {
    if (bytes.size() < sizeof(kMagic) + 4 ||
        std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0)
        throw ContractError("checkpoint " + path + ": bad magic");
    std::uint32_t hlen = 0;
    for (int i = 0; i < 4; ++i)
        hlen |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[sizeof(kMagic) + i]))
                << (8 * i);
    std::size_t body = sizeof(kMagic) + 4;
    if (bytes.size() < body + hlen) throw ContractError("checkpoint " + path + ": truncated header");

    Decoded d;
    d.header = nlohmann::json::parse(bytes.substr(body, hlen));
    if (d.header.at("format").get<int>() != 1)
        throw ContractError("checkpoint " + path + ": unsupported format version");

    std::size_t off = body + hlen;
    std::size_t count = d.header.at("count").get<std::size_t>();
    if (bytes.size() != off + count * 8)
        throw ContractError("checkpoint " + path + ": parameter block size mismatch");
    d.flat.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint64_t v = 0;
        for (int b = 0; b < 8; ++b)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[off + i * 8 + b]))
                 << (8 * b);
        d.flat[i] = std::bit_cast<double>(v);
    }
    return d;
}

}  // namespace

void save_generator(const PerturbationGenerator& gen, const std::string& path) {
    nlohmann::json h;
    h["format"] = 1;
    h["kind"] = "generator";
    h["encoder"] = gen.encoder_dims();
    h["decoder"] = gen.decoder_dims();
    h["budget"] = gen.budget();
    h["activation"] = to_string(gen.activation());
    h["seed"] = gen.seed();
    h["count"] = gen.params().size();
    detail::write_file(path, encode(h, gen.params()));
}

PerturbationGenerator load_generator(const std::string& path) {
    Decoded d = decode(detail::read_file(path), path);
    if (d.header.at("kind").get<std::string>() != "generator")
        throw ContractError("checkpoint " + path + ": not a generator checkpoint");
    PerturbationGenerator gen = PerturbationGenerator::init(
        d.header.at("encoder").get<std::vector<std::size_t>>(),
        d.header.at("decoder").get<std::vector<std::size_t>>(),
        d.header.at("budget").get<double>(),
        activation_from_string(d.header.at("activation").get<std::string>()),
        d.header.at("seed").get<std::uint64_t>());
    ParamVector p = gen.params().zeros_like();
    p.unflatten(d.flat);
    return PerturbationGenerator::from_parts(gen.encoder_dims(), gen.decoder_dims(), gen.budget(),
                                             gen.activation(), gen.seed(), std::move(p));
}

void save_classifier(const MlpClassifier& model, const std::string& path) {
    nlohmann::json h;
    h["format"] = 1;
    h["kind"] = "classifier";
    h["dims"] = model.layer_dims();
    h["activation"] = to_string(model.activation());
    h["seed"] = model.seed();
    h["count"] = model.params().size();
    detail::write_file(path, encode(h, model.params()));
}

MlpClassifier load_classifier(const std::string& path) {
    Decoded d = decode(detail::read_file(path), path);
    if (d.header.at("kind").get<std::string>() != "classifier")
        throw ContractError("checkpoint " + path + ": not a classifier checkpoint");
    MlpClassifier probe = MlpClassifier::init(
        d.header.at("dims").get<std::vector<std::size_t>>(),
        activation_from_string(d.header.at("activation").get<std::string>()),
        d.header.at("seed").get<std::uint64_t>());
    ParamVector p = probe.params().zeros_like();
    p.unflatten(d.flat);
    return MlpClassifier::from_parts(probe.layer_dims(), probe.activation(), probe.seed(),
                                     std::move(p));
}

}  // namespace stackelgrad
