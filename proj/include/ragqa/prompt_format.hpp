#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ragqa {

// Every prompt this project renders wraps free text (chunk texts, candidate
// answers, questions to paraphrase) in these delimiter lines so the text can be
// recovered from the prompt without knowing the surrounding template wording.
inline constexpr std::string_view kBlockOpen = "<<<\n";
inline constexpr std::string_view kBlockClose = "\n>>>";

// Facts in fixture corpora are marked as [[...]] so mock models can locate
// candidate answers inside retrieved context.
inline constexpr std::string_view kAnswerOpen = "[[";
inline constexpr std::string_view kAnswerClose = "]]";

std::string wrap_block(std::string_view text);

/// All delimited blocks in order of appearance.
std::vector<std::string_view> extract_blocks(std::string_view prompt);

/// Text following the last line that starts with "Pergunta:" or "Question:".
std::string extract_question_line(std::string_view prompt);

/// Contents of complete [[...]] spans, in order.
std::vector<std::string_view> extract_answer_spans(std::string_view text);

}  // namespace ragqa
