//! The tool-response text format consumed by the episode engine.
//!
//! This is a stable wire format: a header naming the search mode and echoed
//! filters, one block per retrieved memory with the center's timestamp and
//! the group's messages in chronological order, and a closing
//! `[turns remaining: N]` line. Golden tests pin it byte-for-byte.

use super::SearchResult;

/// Renders a search result as the tool-response text shown to the agent.
pub fn format_tool_response(result: &SearchResult, turns_remaining: u32) -> String {
    let mut blocks: Vec<String> = Vec::with_capacity(result.groups.len() + 2);

    let filter_note = if result.filters_echoed.is_empty() {
        String::new()
    } else {
        format!(" (filtered by: {})", result.filters_echoed)
    };
    blocks.push(format!(
        "Found {} relevant memories using {}{}:",
        result.groups.len(),
        result.mode_used.tool_name(),
        filter_note
    ));

    for (i, scored) in result.groups.iter().enumerate() {
        let mut block = format!(
            "Memory {} [Time: {}]:",
            i + 1,
            scored.group.center.message_timestamp
        );
        for record in scored.group.in_order() {
            block.push_str("\n\n");
            block.push_str(&record.speaker);
            block.push_str(": ");
            block.push_str(&record.content);
        }
        blocks.push(block);
    }

    blocks.push(format!("[turns remaining: {turns_remaining}]"));
    blocks.join("\n\n")
}
