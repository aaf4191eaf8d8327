#include "densehar_cli/run_config.hpp"

#include <functional>
#include <map>

#include "densehar/error.hpp"
#include "densehar/key_value.hpp"

namespace densehar::cli {
namespace {

struct Field {
  std::function<void(RunConfig&, std::string_view, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : ",") + s;
  return out;
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto next = text.find(',', pos);
    const auto item = trim(text.substr(pos, next == std::string_view::npos ? text.npos : next - pos));
    if (!item.empty()) out.emplace_back(item);
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

template <typename T, typename Member>
Field count_field(Member member) {
  return {[member](RunConfig& c, std::string_view v, const std::string& what) {
            std::invoke(member, c) = static_cast<T>(parse_count(v, what));
          },
          [member](const RunConfig& c) { return std::to_string(std::invoke(member, c)); }};
}

template <typename Member>
Field real_field(Member member) {
  return {[member](RunConfig& c, std::string_view v, const std::string& what) {
            std::invoke(member, c) = parse_real(v, what);
          },
          [member](const RunConfig& c) { return format_real(std::invoke(member, c)); }};
}

template <typename Member>
Field path_field(Member member) {
  return {[member](RunConfig& c, std::string_view v, const std::string&) { std::invoke(member, c) = std::string(v); },
          [member](const RunConfig& c) { return std::invoke(member, c); }};
}

const std::map<std::string, Field, std::less<>>& fields() {
  static const std::map<std::string, Field, std::less<>> table = [] {
    std::map<std::string, Field, std::less<>> t;
    t["seed"] = {[](RunConfig& c, std::string_view v, const std::string& w) { c.train.seed = parse_unsigned(v, w); },
                 [](const RunConfig& c) { return std::to_string(c.train.seed); }};
    t["threads"] = count_field<std::size_t>([](auto& c) -> auto& { return c.train.threads; });

    t["arch.blockCount"] = count_field<std::size_t>([](auto& c) -> auto& { return c.arch.block_count; });
    t["arch.filtersPerBlock"] =
        count_field<std::size_t>([](auto& c) -> auto& { return c.arch.filters_per_block; });
    t["arch.convKernelRows"] =
        count_field<std::size_t>([](auto& c) -> auto& { return c.arch.conv_kernel_rows; });
    t["arch.convKernelSteps"] =
        count_field<std::size_t>([](auto& c) -> auto& { return c.arch.conv_kernel_steps; });
    t["arch.poolWidth"] = count_field<std::size_t>([](auto& c) -> auto& { return c.arch.pool_width; });
    t["arch.dropoutRate"] = {
        [](RunConfig& c, std::string_view v, const std::string& w) { c.arch.dropout_rate = parse_float(v, w); },
        [](const RunConfig& c) { return format_float(c.arch.dropout_rate); }};
    t["arch.init"] = {[](RunConfig& c, std::string_view v, const std::string& w) {
                        if (v == "he") c.init = InitScheme::kHeNormal;
                        else if (v == "glorot") c.init = InitScheme::kGlorotUniform;
                        else fail(ErrorKind::kConfig, w + ": expected he or glorot");
                      },
                      [](const RunConfig& c) {
                        return std::string(c.init == InitScheme::kHeNormal ? "he" : "glorot");
                      }};

    t["train.subseqLen"] = count_field<std::size_t>([](auto& c) -> auto& { return c.train.subseq_len; });
    t["train.batchSize"] = count_field<std::size_t>([](auto& c) -> auto& { return c.train.batch_size; });
    t["train.lrInitial"] = real_field([](auto& c) -> auto& { return c.train.lr_initial; });
    t["train.lrReduced"] = real_field([](auto& c) -> auto& { return c.train.lr_reduced; });
    t["train.lrDropAt"] = count_field<std::size_t>([](auto& c) -> auto& { return c.train.lr_drop_at; });
    t["train.stopAt"] = count_field<std::size_t>([](auto& c) -> auto& { return c.train.stop_at; });
    t["train.batchesPerIteration"] =
        count_field<std::size_t>([](auto& c) -> auto& { return c.train.batches_per_iteration; });
    t["train.momentum"] = real_field([](auto& c) -> auto& { return c.train.momentum; });

    t["infer.subseqLen"] = count_field<std::size_t>([](auto& c) -> auto& { return c.infer_subseq_len; });
    t["infer.overlap"] = real_field([](auto& c) -> auto& { return c.infer_overlap; });
    t["infer.window"] = count_field<std::size_t>([](auto& c) -> auto& { return c.window; });
    t["infer.windowStride"] = count_field<std::size_t>([](auto& c) -> auto& { return c.window_stride; });

    t["data.schema"] = path_field([](auto& c) -> auto& { return c.schema_path; });
    t["data.validation"] = path_field([](auto& c) -> auto& { return c.validation_path; });
    t["data.train"] = {[](RunConfig& c, std::string_view v, const std::string&) { c.train_paths = split_list(v); },
                       [](const RunConfig& c) { return join(c.train_paths); }};
    return t;
  }();
  return table;
}

// Order used when writing configs back out.
const std::vector<std::string>& key_order() {
  static const std::vector<std::string> order{
      "seed", "threads",
      "arch.blockCount", "arch.filtersPerBlock", "arch.convKernelRows", "arch.convKernelSteps",
      "arch.poolWidth", "arch.dropoutRate", "arch.init",
      "train.subseqLen", "train.batchSize", "train.lrInitial", "train.lrReduced", "train.lrDropAt",
      "train.stopAt", "train.batchesPerIteration", "train.momentum",
      "infer.subseqLen", "infer.overlap", "infer.window", "infer.windowStride",
      "data.schema", "data.train", "data.validation"};
  return order;
}

}  // namespace

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value, std::string_view where) {
  const auto it = fields().find(key);
  const std::string what = std::string(where) + " " + std::string(key);
  if (it == fields().end()) fail(ErrorKind::kConfig, what + ": unknown configuration key");
  try {
    it->second.set(cfg, trim(value), what);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::kConfig) throw;
    fail(ErrorKind::kConfig, e.what());
  }
}

void load_run_config(RunConfig& cfg, const std::filesystem::path& path) {
  std::vector<KeyValueEntry> entries;
  try {
    entries = read_key_values(path);
  } catch (const Error& e) {
    fail(ErrorKind::kConfig, e.what());
  }
  for (const auto& e : entries) {
    apply_setting(cfg, e.key, e.value, path.string() + ":" + std::to_string(e.line));
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig cfg;
  load_run_config(cfg, path);
  return cfg;
}

std::string format_run_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& key : key_order()) out += key + " = " + fields().at(key).get(cfg) + "\n";
  return out;
}

std::vector<std::string> run_config_keys() { return key_order(); }

}  // namespace densehar::cli
