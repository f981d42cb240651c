use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::Query;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::get;
use axum::{Json, Router};
use fd_core::images::{
    min_dimensions, select_candidate, size_to_query, ImageCandidate, ImageQuery, ImageResolver,
    ImageSearch, ImageSource, MockCatalog, PexelsClient, RateLimiter, SearchError,
};
use fd_core::prd::{parse_image_descriptors, ImageSize};
use fd_core::testkit::BrokenImageSearch;
use serde_json::{json, Value};

fn cand(url: &str, width: u32, height: u32) -> ImageCandidate {
    ImageCandidate {
        url: url.into(),
        width,
        height,
    }
}

fn query(term: &str, size: ImageSize) -> ImageQuery {
    let (min_width, min_height) = min_dimensions(size);
    ImageQuery {
        term: term.into(),
        min_width,
        min_height,
    }
}

fn catalog() -> MockCatalog {
    MockCatalog::from_entries([
        (
            "Red Fox".to_string(),
            vec![cand("https://img.test/fox-small.jpg", 1024, 768), cand("https://img.test/fox-big.jpg", 2400, 1600)],
        ),
        ("cafe".to_string(), vec![cand("https://img.test/cafe.jpg", 500, 400)]),
    ])
}

#[test]
fn size_buckets() {
    let d = parse_image_descriptors("[school(large)][x(Small)][y(medium)]");
    let dims: Vec<_> = d.iter().map(|d| {
        let q = size_to_query(d);
        (q.min_width, q.min_height)
    }).collect();
    assert_eq!(dims, vec![(1600, 900), (400, 300), (800, 600)]);
}

/// Exhaustive check of candidate selection over all lists of up to three
/// candidates drawn from a small dimension grid.
#[test]
fn selection_exhaustive() {
    let dims = [(100, 100), (400, 300), (800, 600), (1600, 900), (2000, 500), (500, 2000)];
    let pool: Vec<ImageCandidate> = dims
        .iter()
        .enumerate()
        .map(|(i, &(w, h))| cand(&format!("u{i}"), w, h))
        .collect();
    let mut lists: Vec<Vec<ImageCandidate>> = vec![vec![]];
    for _ in 0..3 {
        let mut next = Vec::new();
        for l in &lists {
            for c in &pool {
                let mut l2 = l.clone();
                l2.push(c.clone());
                next.push(l2);
            }
        }
        lists.extend(next);
    }
    lists.sort_by_key(|l| l.len());
    lists.dedup();
    for size in ImageSize::ALL {
        let q = query("t", size);
        for list in &lists {
            let got = select_candidate(&q, list).map(|c| list.iter().position(|x| std::ptr::eq(x, c)).unwrap());
            let fits: Vec<usize> = (0..list.len())
                .filter(|&i| list[i].width >= q.min_width && list[i].height >= q.min_height)
                .collect();
            let expected = if let Some(&first) = fits.first() {
                Some(first)
            } else if list.is_empty() {
                None
            } else {
                let area = |i: usize| list[i].width as u64 * list[i].height as u64;
                let best = (0..list.len()).map(area).max().unwrap();
                (0..list.len()).find(|&i| area(i) == best)
            };
            assert_eq!(got, expected, "{size:?} {list:?}");
        }
    }
}

#[tokio::test]
async fn duplicates_hit_provider_once() {
    let cat = catalog();
    let mut resolver = ImageResolver::new(&cat);
    let qs = vec![query("red fox", ImageSize::Medium), query("RED FOX", ImageSize::Large), query("red fox", ImageSize::Medium)];
    let out = resolver.resolve(&qs).await.unwrap();
    assert_eq!(cat.lookups(), 2);
    assert_eq!(resolver.provider_calls(), 2);
    assert_eq!(out[0].url, "https://img.test/fox-small.jpg");
    assert_eq!(out[0].source, ImageSource::Api);
    assert_eq!(out[1].url, "https://img.test/fox-big.jpg");
    assert_eq!(out[2].url, out[0].url);
    assert_eq!(out[2].source, ImageSource::Cache);
}

#[tokio::test]
async fn unknown_terms_fall_back_to_sized_placeholder() {
    let cat = catalog();
    let mut resolver = ImageResolver::new(&cat);
    let out = resolver
        .resolve(&[query("owl", ImageSize::Small), query("owl", ImageSize::Small)])
        .await
        .unwrap();
    assert_eq!(out[0].source, ImageSource::Fallback);
    assert_eq!(out[1].source, ImageSource::Fallback);
    assert_eq!((out[0].width, out[0].height), (400, 300));
    assert!(out[0].url.starts_with("data:image/svg+xml;base64,"));
    assert!(resolver.warnings().is_empty());

    // Too-small results still beat the placeholder: largest available wins.
    let out = resolver.resolve(&[query("cafe", ImageSize::Large)]).await.unwrap();
    assert_eq!(out[0].url, "https://img.test/cafe.jpg");
}

#[tokio::test]
async fn outage_degrades_with_warning_and_rejection_fails() {
    let down = BrokenImageSearch(SearchError::Unreachable("connection refused".into()));
    let mut resolver = ImageResolver::new(&down);
    let out = resolver.resolve(&[query("a", ImageSize::Small), query("b", ImageSize::Large)]).await.unwrap();
    assert!(out.iter().all(|r| r.source == ImageSource::Fallback));
    assert_eq!(resolver.warnings().len(), 2);

    let denied = BrokenImageSearch(SearchError::Rejected {
        status: 401,
        detail: "bad key".into(),
    });
    let mut resolver = ImageResolver::new(&denied);
    assert!(resolver.resolve(&[query("a", ImageSize::Small)]).await.is_err());
}

async fn serve(app: Router) -> SocketAddr {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    addr
}

async fn fake_pexels(headers: HeaderMap, Query(q): Query<Vec<(String, String)>>) -> (StatusCode, Json<Value>) {
    if headers.get("authorization").map(|v| v.as_bytes()) != Some(b"k3y") {
        return (StatusCode::UNAUTHORIZED, Json(json!({"error": "bad key"})));
    }
    let term = q.iter().find(|(k, _)| k == "query").map(|(_, v)| v.clone()).unwrap_or_default();
    let per_page = q.iter().find(|(k, _)| k == "per_page").map(|(_, v)| v.clone()).unwrap_or_default();
    match term.as_str() {
        "boom" => (StatusCode::BAD_GATEWAY, Json(json!({}))),
        "slow down" => (StatusCode::TOO_MANY_REQUESTS, Json(json!({}))),
        _ => (
            StatusCode::OK,
            Json(json!({
                "photos": [
                    {"width": 1024, "height": 768, "src": {"original": format!("https://img.test/{term}-{per_page}.jpg")}},
                    {"width": 4000, "height": 3000, "src": {"original": "https://img.test/huge.jpg"}}
                ]
            })),
        ),
    }
}

#[tokio::test]
async fn pexels_client_against_local_server() {
    let addr = serve(Router::new().route("/v1/search", get(fake_pexels))).await;
    let base = format!("http://{addr}");
    let limiter = Arc::new(RateLimiter::new(Duration::ZERO));
    let client = PexelsClient::new(&base, "k3y", 5).unwrap().with_rate_limiter(limiter.clone());

    let hits = client.search(&query("red fox", ImageSize::Medium)).await.unwrap();
    assert_eq!(hits[0], cand("https://img.test/red fox-5.jpg", 1024, 768));

    assert!(matches!(client.search(&query("boom", ImageSize::Small)).await, Err(SearchError::Unreachable(_))));
    assert!(matches!(client.search(&query("slow down", ImageSize::Small)).await, Err(SearchError::Unreachable(_))));

    let wrong = PexelsClient::new(&base, "nope", 5).unwrap().with_rate_limiter(limiter);
    assert!(matches!(
        wrong.search(&query("red fox", ImageSize::Small)).await,
        Err(SearchError::Rejected { status: 401, .. })
    ));

    let gone = PexelsClient::new("http://127.0.0.1:9", "k3y", 5)
        .unwrap()
        .with_rate_limiter(Arc::new(RateLimiter::new(Duration::ZERO)));
    assert!(matches!(gone.search(&query("x", ImageSize::Small)).await, Err(SearchError::Unreachable(_))));
}

#[tokio::test(start_paused = true)]
async fn rate_limiter_spaces_requests() {
    let limiter = RateLimiter::new(Duration::from_millis(350));
    let t0 = tokio::time::Instant::now();
    for _ in 0..4 {
        limiter.acquire().await;
    }
    assert_eq!(t0.elapsed(), Duration::from_millis(1050));
}
