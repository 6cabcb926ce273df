#include "ragqa/prompt_format.hpp"

#include "ragqa/text.hpp"

namespace ragqa {

std::string wrap_block(std::string_view text) {
    std::string out(kBlockOpen);
    out += text;
    out += kBlockClose;
    return out;
}

std::vector<std::string_view> extract_blocks(std::string_view prompt) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const auto open = prompt.find(kBlockOpen, pos);
        if (open == std::string_view::npos) break;
        const auto body = open + kBlockOpen.size();
        const auto close = prompt.find(kBlockClose, body);
        if (close == std::string_view::npos) break;
        out.push_back(prompt.substr(body, close - body));
        pos = close + kBlockClose.size();
    }
    return out;
}

std::string extract_question_line(std::string_view prompt) {
    std::string result;
    for (const auto& line : split(prompt, '\n')) {
        for (std::string_view label : {"Pergunta:", "Question:"}) {
            if (line.rfind(label, 0) == 0) result = trim(std::string_view(line).substr(label.size()));
        }
    }
    return result;
}

std::vector<std::string_view> extract_answer_spans(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const auto open = text.find(kAnswerOpen, pos);
        if (open == std::string_view::npos) break;
        const auto body = open + kAnswerOpen.size();
        const auto close = text.find(kAnswerClose, body);
        if (close == std::string_view::npos) break;
        // A nested opener means the first one was cut off by a chunk boundary.
        const auto reopen = text.find(kAnswerOpen, body);
        if (reopen != std::string_view::npos && reopen < close) {
            pos = reopen;
            continue;
        }
        out.push_back(text.substr(body, close - body));
        pos = close + kAnswerClose.size();
    }
    return out;
}

}  // namespace ragqa
