//! End-to-end API flow against an ephemeral server with offline backends:
//! ingest -> embed -> search -> episode -> rollout -> train -> eval, plus
//! the pure math endpoints.

use serde_json::{json, Value};

use memsearch_core::config::RunConfig;
use memsearch_server::spawn_ephemeral;

fn tiny_dataset() -> Value {
    let session = |speakers: (&str, &str), topic: &str| {
        json!([
            {"speaker": speakers.0, "dia_id": "D1:1",
             "text": format!("I spent the morning {topic} near the lake.")},
            {"speaker": speakers.1, "dia_id": "D1:2",
             "text": format!("That sounds great, {topic} is wonderful!")},
            {"speaker": speakers.0, "dia_id": "D1:3",
             "text": "We should do it together sometime soon."}
        ])
    };
    json!([
        {
            "sample_id": "conv-a",
            "conversation": {
                "speaker_a": "Ann", "speaker_b": "Ben",
                "session_1": session(("Ann", "Ben"), "kayaking"),
                "session_1_date_time": "1:10 pm on 3 April, 2023",
                "session_2": session(("Ann", "Ben"), "painting"),
                "session_2_date_time": "2:20 pm on 9 April, 2023"
            },
            "qa": [
                {"question": "What did Ann do near the lake?", "answer": "kayaking",
                 "evidence": ["D1:1"], "category": 4},
                {"question": "When did Ann paint?", "answer": "9 April 2023", "category": 2}
            ]
        },
        {
            "sample_id": "conv-b",
            "conversation": {
                "speaker_a": "Cara", "speaker_b": "Dan",
                "session_1": session(("Cara", "Dan"), "baking"),
                "session_1_date_time": "4:00 pm on 2 May, 2023"
            },
            "qa": [
                {"question": "What did Cara bake?", "answer": "bread", "category": 4},
                {"question": "Anything adversarial?", "adversarial_answer": "n/a", "category": 5}
            ]
        }
    ])
}

fn script_file() -> Value {
    json!({
        "default": [{
            "steps": [
                {"content": "searching", "tool_calls": [
                    {"name": "search_memory",
                     "arguments": {"search_type": "keyword", "keywords": ["lake"]}}]},
                {"content": "", "tool_calls": [
                    {"name": "submit_answer", "arguments": {"answer": "kayaking"}}]}
            ]
        }]
    })
}

async fn start() -> (String, tempfile::TempDir, reqwest::Client) {
    let dir = tempfile::tempdir().unwrap();
    let dataset_path = dir.path().join("dataset.json");
    std::fs::write(&dataset_path, serde_json::to_vec_pretty(&tiny_dataset()).unwrap()).unwrap();
    let script_path = dir.path().join("script.json");
    std::fs::write(&script_path, serde_json::to_vec(&script_file()).unwrap()).unwrap();

    let mut config = RunConfig::default();
    config.dataset = Some(dataset_path);
    config.bank_dir = dir.path().join("banks");
    config.out_dir = dir.path().join("out");
    config.policy_url = format!("scripted:{}", script_path.display());
    config.embed_url = "hashing:".into();
    config.judge_url = "heuristic:".into();
    config.embedding_dimension = 32;
    config.grpo.group_size = 2;
    config.grpo.batch_size = 4;
    config.grpo.steps = 2;
    config.grpo.validate_every = 1;
    config.parallelism = 1;
    config.split_seed = 7;

    let base = spawn_ephemeral(config).await.unwrap();
    (base, dir, reqwest::Client::new())
}

async fn post(client: &reqwest::Client, base: &str, path: &str, body: Value) -> Value {
    let resp = client.post(format!("{base}{path}")).json(&body).send().await.unwrap();
    let status = resp.status();
    let value: Value = resp.json().await.unwrap();
    assert!(status.is_success(), "{path} -> {status}: {value}");
    value
}

#[tokio::test]
async fn full_api_flow() {
    let (base, dir, client) = start().await;

    // Health and config carry the config hash.
    let health: Value =
        client.get(format!("{base}/health")).send().await.unwrap().json().await.unwrap();
    assert_eq!(health["ok"], true);
    let hash = health["config_hash"].as_str().unwrap().to_string();
    assert_eq!(hash.len(), 16);

    // Ingest: normalized file plus one bank directory per conversation.
    let ingest = post(
        &client,
        &base,
        "/api/ingest",
        json!({"dataset": dir.path().join("dataset.json")}),
    )
    .await;
    assert_eq!(ingest["bank_dirs"].as_array().unwrap().len(), 2);
    assert!(dir.path().join("banks/normalized.jsonl").exists());
    let stats = &ingest["stats"]["per_conversation"];
    assert_eq!(stats.as_array().unwrap().len(), 2);

    // Embed both banks.
    for conv in ["conv-a", "conv-b"] {
        let embed = post(
            &client,
            &base,
            "/api/embed",
            json!({"bank_dir": dir.path().join("banks").join(conv)}),
        )
        .await;
        assert_eq!(embed["dimension"], 32);
        assert_eq!(embed["records"], embed["newly_embedded"]);
    }

    // Banks listing shows both fully embedded.
    let banks: Value =
        client.get(format!("{base}/api/banks")).send().await.unwrap().json().await.unwrap();
    let banks = banks.as_array().unwrap();
    assert_eq!(banks.len(), 2);
    for b in banks {
        assert_eq!(b["records"], b["embedded"]);
    }

    // Keyword search matches the planted text and formats the wire shape.
    let search = post(
        &client,
        &base,
        "/api/search",
        json!({"conversation_id": "conv-a", "mode": "keyword",
               "keywords": ["kayaking"], "speaker": "Ann"}),
    )
    .await;
    let formatted = search["formatted"].as_str().unwrap();
    assert!(formatted.starts_with("Found 1 relevant memories using keyword_search (filtered by: speaker: Ann):"), "{formatted}");

    // Semantic search returns scored groups.
    let semantic = post(
        &client,
        &base,
        "/api/search",
        json!({"conversation_id": "conv-a", "mode": "semantic",
               "query": "kayaking near the lake", "top_k": 2}),
    )
    .await;
    assert_eq!(semantic["result"]["groups"].as_array().unwrap().len(), 2);

    // A single scripted episode submits the scripted answer.
    let episode = post(
        &client,
        &base,
        "/api/episode",
        json!({"question_id": "conv-a/q/0", "with_reward": true}),
    )
    .await;
    assert_eq!(episode["trajectory"]["terminal"], "Submitted");
    assert_eq!(episode["trajectory"]["final_answer"], "kayaking");
    // Heuristic judge accepts the exact gold answer; reward = judge * F1 = 1.
    assert_eq!(episode["reward"]["reward"], 1.0);

    // A rollout group with zero-variance rewards has all-zero advantages.
    let rollout = post(
        &client,
        &base,
        "/api/rollout",
        json!({"question_id": "conv-a/q/0", "group_size": 3}),
    )
    .await;
    assert_eq!(rollout["advantages"], json!([0.0, 0.0, 0.0]));

    // Pure math endpoints.
    let adv = post(
        &client,
        &base,
        "/api/grpo/advantages",
        json!({"rewards": [1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0], "epsilon_std": 1e-6}),
    )
    .await;
    let expect = 0.5 / (0.5 + 1e-6);
    assert!((adv["advantages"][0].as_f64().unwrap() - expect).abs() < 1e-12);

    let metrics = post(
        &client,
        &base,
        "/api/metrics/answer",
        json!({"predicted": "shell necklace", "gold": "a shell necklace"}),
    )
    .await;
    assert!((metrics["f1"].as_f64().unwrap() - 0.8).abs() < 1e-12);

    let judged = post(
        &client,
        &base,
        "/api/judge",
        json!({"question": "q", "gold": "kayaking", "generated": "kayaking"}),
    )
    .await;
    assert_eq!(judged["verdict"], "CORRECT");

    // Two training steps against the scripted policy.
    let train = post(&client, &base, "/api/train", json!({})).await;
    let summaries = train["summaries"].as_array().unwrap();
    assert_eq!(summaries.len(), 2);
    assert!(dir.path().join("out/train_log.jsonl").exists());

    // Full evaluation over the validation conversation.
    let eval = post(&client, &base, "/api/eval", json!({})).await;
    let report = &eval["report"];
    assert_eq!(report["metadata"]["config_hash"], hash.as_str());
    assert!(report["overall"]["count"].as_u64().unwrap() >= 1);
    assert!(dir.path().join("out/eval/report.txt").exists());
    assert!(dir.path().join("out/eval/records.jsonl").exists());

    // Comparing a report against itself gives zero deltas.
    let compare = post(
        &client,
        &base,
        "/api/report/compare",
        json!({"reports": [report, report]}),
    )
    .await;
    assert_eq!(compare["table"]["rows"][0]["delta_abs"], 0.0);
    assert!(compare["rendered"].as_str().unwrap().contains("metric"));

    // Unknown question id maps to 404.
    let resp = client
        .post(format!("{base}/api/episode"))
        .json(&json!({"question_id": "missing/q/0"}))
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), 404);
}
