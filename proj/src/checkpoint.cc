/*
 * Copyright 2026 The ConvPS Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "convps/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "convps/error.h"

namespace convps {
namespace {

void PutU32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void PutF32(std::string& out, double v) {
  PutU32(out, std::bit_cast<uint32_t>(static_cast<float>(v)));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  uint32_t U32() {
    Need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i]))
           << (8 * i);
    }
    pos_ += 4;
    return v;
  }
  float F32() { return std::bit_cast<float>(U32()); }
  std::string_view Bytes(size_t n) {
    Need(n);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  bool AtEnd() const { return pos_ == bytes_.size(); }

 private:
  void Need(size_t n) const {
    if (bytes_.size() - pos_ < n) throw InvalidArgument("checkpoint truncated");
  }
  std::string_view bytes_;
  size_t pos_ = 0;
};

void PutTable(std::string& out, const std::vector<std::string>& table) {
  for (const auto& s : table) {
    PutU32(out, static_cast<uint32_t>(s.size()));
    out += s;
  }
}

std::vector<std::string> GetTable(Reader& in, uint32_t n) {
  std::vector<std::string> table;
  table.reserve(n);
  for (uint32_t i = 0; i < n; ++i) table.emplace_back(in.Bytes(in.U32()));
  return table;
}

void PutMatrix(std::string& out, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) PutF32(out, m.data()[i]);
}

void GetMatrix(Reader& in, Matrix& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = in.F32();
}

}  // namespace

CheckpointVocab CheckpointVocab::FromCorpus(const Corpus& corpus) {
  CheckpointVocab v;
  for (const auto& u : corpus.users()) v.users.push_back(u.user_id);
  for (const auto& item : corpus.items()) v.items.push_back(item.item_id);
  v.words = corpus.vocab().words;
  v.slots = corpus.vocab().slots;
  v.values = corpus.vocab().values;
  return v;
}

ModelShape ShapeForCorpus(const Corpus& corpus, int dim) {
  return {dim,
          corpus.num_users(),
          corpus.num_items(),
          corpus.vocab().num_words(),
          corpus.vocab().num_slots(),
          corpus.vocab().num_values()};
}

std::string SerializeCheckpoint(const ModelParams& params,
                                const CheckpointVocab& vocab) {
  const ModelShape s = params.shape();
  if (static_cast<int>(vocab.users.size()) != s.num_users ||
      static_cast<int>(vocab.items.size()) != s.num_items ||
      static_cast<int>(vocab.words.size()) != s.num_words ||
      static_cast<int>(vocab.slots.size()) != s.num_slots ||
      static_cast<int>(vocab.values.size()) != s.num_values) {
    throw InvalidArgument("checkpoint vocabulary does not match parameters");
  }
  std::string out(kCheckpointMagic);
  PutU32(out, kCheckpointVersion);
  for (int v : {s.dim, s.num_users, s.num_items, s.num_slots, s.num_words,
                s.num_values}) {
    PutU32(out, static_cast<uint32_t>(v));
  }
  PutTable(out, vocab.users);
  PutTable(out, vocab.items);
  PutTable(out, vocab.words);
  PutTable(out, vocab.slots);
  PutTable(out, vocab.values);
  PutMatrix(out, params.user_emb);
  PutMatrix(out, params.item_emb);
  PutMatrix(out, params.word_emb);
  PutMatrix(out, params.slot_pos_emb);
  PutMatrix(out, params.slot_neg_emb);
  PutMatrix(out, params.value_emb);
  PutMatrix(out, params.proj_weight);
  for (Eigen::Index i = 0; i < params.proj_bias.size(); ++i) {
    PutF32(out, params.proj_bias[i]);
  }
  return out;
}

Checkpoint ParseCheckpoint(std::string_view bytes) {
  Reader in(bytes);
  if (in.Bytes(kCheckpointMagic.size()) != kCheckpointMagic) {
    throw InvalidArgument("not a checkpoint (bad magic)");
  }
  const uint32_t version = in.U32();
  if (version != kCheckpointVersion) {
    throw InvalidArgument("unsupported checkpoint version " +
                          std::to_string(version));
  }
  ModelShape shape;
  shape.dim = static_cast<int>(in.U32());
  shape.num_users = static_cast<int>(in.U32());
  shape.num_items = static_cast<int>(in.U32());
  shape.num_slots = static_cast<int>(in.U32());
  shape.num_words = static_cast<int>(in.U32());
  shape.num_values = static_cast<int>(in.U32());
  Checkpoint ck;
  ck.vocab.users = GetTable(in, shape.num_users);
  ck.vocab.items = GetTable(in, shape.num_items);
  ck.vocab.words = GetTable(in, shape.num_words);
  ck.vocab.slots = GetTable(in, shape.num_slots);
  ck.vocab.values = GetTable(in, shape.num_values);
  ck.params = ModelParams::Zeros(shape);
  GetMatrix(in, ck.params.user_emb);
  GetMatrix(in, ck.params.item_emb);
  GetMatrix(in, ck.params.word_emb);
  GetMatrix(in, ck.params.slot_pos_emb);
  GetMatrix(in, ck.params.slot_neg_emb);
  GetMatrix(in, ck.params.value_emb);
  GetMatrix(in, ck.params.proj_weight);
  for (Eigen::Index i = 0; i < ck.params.proj_bias.size(); ++i) {
    ck.params.proj_bias[i] = in.F32();
  }
  if (!in.AtEnd()) throw InvalidArgument("trailing bytes after checkpoint");
  if (!ck.params.AllFinite()) {
    throw InvalidArgument("checkpoint contains non-finite parameters");
  }
  return ck;
}

void WriteCheckpoint(const std::filesystem::path& path,
                     const ModelParams& params, const CheckpointVocab& vocab) {
  const std::string bytes = SerializeCheckpoint(params, vocab);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

Checkpoint ReadCheckpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return ParseCheckpoint(bytes);
}

void CheckCheckpointMatches(const Checkpoint& checkpoint, const Corpus& corpus) {
  if (!(checkpoint.vocab == CheckpointVocab::FromCorpus(corpus))) {
    throw InvalidArgument(
        "checkpoint vocabularies do not match the corpus (different corpus or "
        "ingest options?)");
  }
}

}  // namespace convps
