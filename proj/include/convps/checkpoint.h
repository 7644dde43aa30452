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

#ifndef CONVPS_CHECKPOINT_H_
#define CONVPS_CHECKPOINT_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "convps/corpus.h"
#include "convps/model.h"

namespace convps {

// Layout (all integers little-endian):
//   magic "CONVPSCK", u32 version, u32 t, M, N, F, |D_w|, |A|
//   five string tables (users, items, words, slots, values), each entry a
//   u32 byte length followed by the bytes
//   float32 matrices in ModelParams field order, row-major
inline constexpr std::string_view kCheckpointMagic = "CONVPSCK";
inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointVocab {
  std::vector<std::string> users;
  std::vector<std::string> items;
  std::vector<std::string> words;
  std::vector<std::string> slots;
  std::vector<std::string> values;

  static CheckpointVocab FromCorpus(const Corpus& corpus);
  friend bool operator==(const CheckpointVocab&,
                         const CheckpointVocab&) = default;
};

struct Checkpoint {
  ModelParams params;
  CheckpointVocab vocab;
};

std::string SerializeCheckpoint(const ModelParams& params,
                                const CheckpointVocab& vocab);
Checkpoint ParseCheckpoint(std::string_view bytes);

void WriteCheckpoint(const std::filesystem::path& path,
                     const ModelParams& params, const CheckpointVocab& vocab);
Checkpoint ReadCheckpoint(const std::filesystem::path& path);

// Throws InvalidArgument when the checkpoint was trained on a corpus whose
// vocabularies differ from `corpus`.
void CheckCheckpointMatches(const Checkpoint& checkpoint, const Corpus& corpus);

// Model shape implied by a corpus at embedding size `dim`.
ModelShape ShapeForCorpus(const Corpus& corpus, int dim);

}  // namespace convps

#endif  // CONVPS_CHECKPOINT_H_
