#include "maskprop/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

#include "maskprop/error.hpp"

namespace maskprop {

void Checkpoint::put(const std::string& name, std::vector<int> shape,
                     std::vector<double> data) {
  if (static_cast<std::int64_t>(data.size()) != nn::numel_of(shape))
    throw ShapeError("checkpoint entry '" + name + "': data/shape mismatch");
  entries_[name] = Entry{std::move(shape), std::move(data)};
}

void Checkpoint::put_params(const std::string& ns, const nn::ParamStore& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& t = params.tensor(i);
    put(ns + "/" + params.name(i), t.shape(), t.data());
  }
}

const Checkpoint::Entry& Checkpoint::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw Error("checkpoint entry not found: " + name);
  accessed_.insert(name);
  return it->second;
}

void Checkpoint::load_params(const std::string& ns, nn::ParamStore& params) const {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Entry& e = get(ns + "/" + params.name(i));
    auto& t = params.tensor(i);
    if (e.shape != t.shape())
      throw ShapeError("checkpoint entry '" + ns + "/" + params.name(i) + "': shape mismatch");
    t.data() = e.data;
  }
}

std::vector<std::string> Checkpoint::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

namespace {

template <typename T>
void write_pod(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T read_pod(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!f) throw IoError("truncated checkpoint file");
  return v;
}

}  // namespace

void Checkpoint::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write checkpoint: " + path);
  f.write(kMagic, std::strlen(kMagic));
  const std::string meta_str = meta.dump();
  write_pod<std::uint64_t>(f, meta_str.size());
  f.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
  write_pod<std::uint64_t>(f, entries_.size());
  for (const auto& [name, e] : entries_) {
    write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint32_t>(f, static_cast<std::uint32_t>(e.shape.size()));
    for (int d : e.shape) write_pod<std::int32_t>(f, d);
    write_pod<std::uint64_t>(f, e.data.size());
    f.write(reinterpret_cast<const char*>(e.data.data()),
            static_cast<std::streamsize>(e.data.size() * sizeof(double)));
  }
  if (!f) throw IoError("failed writing checkpoint: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  std::string magic(std::strlen(kMagic), '\0');
  f.read(magic.data(), static_cast<std::streamsize>(magic.size()));
  if (!f || magic != kMagic) throw IoError("not a checkpoint file (bad magic): " + path);
  Checkpoint ck;
  const auto meta_len = read_pod<std::uint64_t>(f);
  std::string meta_str(meta_len, '\0');
  f.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
  if (!f) throw IoError("truncated checkpoint meta");
  ck.meta = nlohmann::json::parse(meta_str);
  const auto n = read_pod<std::uint64_t>(f);
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto name_len = read_pod<std::uint32_t>(f);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    const auto rank = read_pod<std::uint32_t>(f);
    std::vector<int> shape(rank);
    for (auto& d : shape) d = read_pod<std::int32_t>(f);
    const auto count = read_pod<std::uint64_t>(f);
    std::vector<double> data(count);
    f.read(reinterpret_cast<char*>(data.data()),
           static_cast<std::streamsize>(count * sizeof(double)));
    if (!f) throw IoError("truncated checkpoint entry: " + name);
    ck.entries_[name] = Entry{std::move(shape), std::move(data)};
  }
  return ck;
}

}  // namespace maskprop
