#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "maskprop/nn/adam.hpp"

namespace maskprop {

// Versioned container of named double blobs plus a JSON meta block.
// Regressor and critic parameters live under distinct namespaces
// ("regressor/", "critic_s/", "critic_t/"); every read is logged so callers
// can assert which namespaces a code path touched.
class Checkpoint {
 public:
  static constexpr const char* kMagic = "MASKPROP-CKPT-v1\n";

  struct Entry {
    std::vector<int> shape;
    std::vector<double> data;
  };

  void put(const std::string& name, std::vector<int> shape, std::vector<double> data);
  void put_params(const std::string& ns, const nn::ParamStore& params);

  bool has(const std::string& name) const { return entries_.count(name) != 0; }
  const Entry& get(const std::string& name) const;  // records the access
  // Copies stored values into an existing store with matching names/shapes.
  void load_params(const std::string& ns, nn::ParamStore& params) const;

  std::vector<std::string> keys() const;
  const std::set<std::string>& accessed() const { return accessed_; }
  void clear_access_log() const { accessed_.clear(); }

  nlohmann::json meta;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

 private:
  std::map<std::string, Entry> entries_;
  mutable std::set<std::string> accessed_;
};

}  // namespace maskprop
