// Copyright 2026 The LLaRD Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <string_view>

#include "llard/common.hpp"

namespace llard {

/// Versioned prompt templates. Defaults are embedded; a template directory
/// can override any of them with a `<name>.txt` file containing the system
/// text, a line `---`, and the user-text template. Placeholders use
/// `{name}` syntax. Response grammars are strict and line-oriented so the
/// pipelines can parse them.
class PromptLibrary {
public:
  static constexpr std::string_view kVersion = "prompts-v1";

  struct Template {
    std::string system;
    std::string user;
  };

  PromptLibrary() { load_defaults(); }

  explicit PromptLibrary(const std::string& override_dir) : PromptLibrary() {
    namespace fs = std::filesystem;
    for (auto& [name, tpl] : templates_) {
      const fs::path p = fs::path(override_dir) / (name + ".txt");
      if (!fs::exists(p)) continue;
      std::ifstream in(p);
      std::string line, system, user;
      bool in_user = false;
      while (std::getline(in, line)) {
        if (!in_user && line == "---") {
          in_user = true;
          continue;
        }
        (in_user ? user : system) += line + "\n";
      }
      if (user.empty())
        throw UsageError(p.string() + ": expected `system --- user` layout");
      tpl = Template{trim(system), trim(user)};
    }
  }

  const Template& get(const std::string& name) const {
    const auto it = templates_.find(name);
    if (it == templates_.end())
      throw UsageError("unknown prompt template: " + name);
    return it->second;
  }

  static std::string render(std::string_view text,
                            const std::map<std::string, std::string>& vars) {
    std::string out(text);
    for (const auto& [key, value] : vars)
      out = replace_all(out, "{" + key + "}", value);
    return out;
  }

private:
  void load_defaults() {
    templates_["user_profile"] = {
        "You are an analyst who writes short, factual preference profiles of "
        "readers and shoppers from their interaction history. Describe what "
        "the person likes in two or three sentences. Do not invent facts "
        "that the history does not support.",
        "Subject: user {subject_id}\n\n"
        "Interaction history (most recent first, one block per item: title, "
        "description, the user's comment):\n{config_text}\n\n"
        "Write the preference profile."};

    templates_["item_profile"] = {
        "You are a cataloger who writes short, factual item profiles. "
        "Summarize what the item is and who would enjoy it in two or three "
        "sentences. Stick to the given text.",
        "Subject: item {subject_id}\n\n"
        "Item information (title, category, description):\n{config_text}\n\n"
        "Write the item profile."};

    templates_["condense_keywords"] = {
        "You distill profiles into search keywords. Reply with exactly one "
        "line: a comma-separated list of at most {max_keywords} short "
        "keywords (each at most five words, lowercase). No other text.",
        "Subject: {subject_kind} {subject_id}\n\n"
        "Profile:\n{profile}\n\n"
        "Reply with the keyword line only."};

    templates_["rate_neighborhood"] = {
        "You rate how well items match a user's preferences using exactly "
        "three tiers: High, Medium, Low. Reply with one line per item in the "
        "form `item_id: High|Medium|Low` and no other text.",
        "Subject: user {subject_id}\n"
        "User profile:\n{profile}\n"
        "User keywords: {keywords}\n\n"
        "Items the user has interacted with:\n{candidates}\n\n"
        "Rate each item."};

    templates_["identify_noise"] = {
        "You decide which low-rated interactions are noise, i.e. accidental "
        "or misleading interactions that do not reflect any latent interest "
        "of the user. Reply with one item_id per line for the noisy ones, or "
        "`none`. No other text.",
        "Subject: user {subject_id}\n"
        "User keywords: {keywords}\n"
        "Ratings so far:\n{rated}\n\n"
        "Candidates (rated Low):\n{candidates}\n\n"
        "Which of the candidates are noise? Consider that a low-rated item "
        "may still hint at a latent interest; keep those."};

    templates_["collaborative_enhancement"] = {
        "You decide which nearby users share this user's tastes strongly "
        "enough to borrow signal from. Reply with one user_id per line for "
        "the chosen users, or `none`. No other text.",
        "Subject: user {subject_id}\n"
        "User keywords: {keywords}\n"
        "Ratings so far:\n{rated}\n\n"
        "Candidate users who interacted with the same highly rated items:\n"
        "{candidates}\n\n"
        "Which candidates have strongly similar preferences?"};

    templates_["explore_interests"] = {
        "You decide which unseen items a user would plausibly enjoy, based "
        "on their preferences and on similar users' items. Reply with one "
        "item_id per line for the chosen items, or `none`. No other text.",
        "Subject: user {subject_id}\n"
        "User keywords: {keywords}\n"
        "Similar users selected earlier: {prior}\n\n"
        "Candidate items from those users' histories:\n{candidates}\n\n"
        "Which candidates are genuine potential interests?"};
  }

  std::map<std::string, Template> templates_;
};

/// Candidate line in the grammar shared by prompts and the mock provider.
inline std::string candidate_line(const std::string& id,
                                  const std::string& keywords_csv) {
  return "- " + id + " | keywords: " + keywords_csv;
}

}  // namespace llard
