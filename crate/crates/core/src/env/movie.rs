//! Movie recommendation scenario: arms are users, contexts are movie genre
//! vectors, rewards are normalized ratings and the allowed flag comes from an
//! age-band × genre constraint matrix.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use log::warn;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::env::{EnvItem, EnvironmentSpec, Scenario};
use crate::error::{Error, Result};
use crate::model::ContextVector;
use crate::rng::{derive_seed, substream, Purpose};

pub const AGE_BANDS: [&str; 7] = ["12-17", "18-24", "25-34", "35-44", "45-54", "55-64", "65+"];

/// The nine named genres plus a catch-all slot for movies with none of them.
pub const DEFAULT_GENRES: [&str; 10] = [
    "Action",
    "Adventure",
    "Comedy",
    "Drama",
    "Fantasy",
    "Horror",
    "Romance",
    "Sci-Fi",
    "Thriller",
    "Other",
];

pub const DEFAULT_RATING_DIVISOR: f64 = 5.0;

/// Binary age-band × genre matrix; `true` means the genre may be recommended
/// to users in that band.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BehaviorConstraintMatrix {
    bands: usize,
    genres: usize,
    entries: Vec<bool>,
}

impl BehaviorConstraintMatrix {
    pub fn new(bands: usize, genres: usize, entries: Vec<bool>) -> Result<Self> {
        if bands == 0 || genres == 0 {
            return Err(Error::domain("constraint matrix must be nonempty"));
        }
        if entries.len() != bands * genres {
            return Err(Error::Shape {
                expected: bands * genres,
                found: entries.len(),
            });
        }
        Ok(Self {
            bands,
            genres,
            entries,
        })
    }

    pub fn all_allowed(bands: usize, genres: usize) -> Result<Self> {
        Self::new(bands, genres, vec![true; bands * genres])
    }

    /// 7 × 10 default over [`AGE_BANDS`] × [`DEFAULT_GENRES`].
    ///
    /// Every band restricts at least one genre; "Other" is never restricted.
    pub fn default_matrix() -> Self {
        let restricted: [&[&str]; 7] = [
            &["Action", "Horror", "Thriller"],
            &["Romance", "Drama"],
            &["Fantasy"],
            &["Sci-Fi", "Adventure"],
            &["Comedy"],
            &["Horror", "Fantasy"],
            &["Horror", "Sci-Fi", "Action"],
        ];
        let mut entries = vec![true; 70];
        for (band, names) in restricted.iter().enumerate() {
            for name in names.iter() {
                let g = DEFAULT_GENRES
                    .iter()
                    .position(|x| x == name)
                    .expect("known genre");
                entries[band * 10 + g] = false;
            }
        }
        Self {
            bands: 7,
            genres: 10,
            entries,
        }
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn genres(&self) -> usize {
        self.genres
    }

    pub fn get(&self, band: usize, genre: usize) -> Result<bool> {
        if band >= self.bands {
            return Err(Error::Index {
                index: band,
                len: self.bands,
            });
        }
        if genre >= self.genres {
            return Err(Error::Index {
                index: genre,
                len: self.genres,
            });
        }
        Ok(self.entries[band * self.genres + genre])
    }

    pub fn set(&mut self, band: usize, genre: usize, allowed: bool) -> Result<()> {
        self.get(band, genre)?;
        self.entries[band * self.genres + genre] = allowed;
        Ok(())
    }

    /// Parses a whitespace-separated 0/1 grid, one row per band.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<bool>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|tok| match tok {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(Error::parse(
                        "constraint matrix",
                        format!("line {}: expected 0 or 1, found `{other}`", lineno + 1),
                    )),
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(Error::parse(
                        "constraint matrix",
                        format!(
                            "line {}: row has {} entries, expected {}",
                            lineno + 1,
                            row.len(),
                            first.len()
                        ),
                    ));
                }
            }
            rows.push(row);
        }
        let bands = rows.len();
        let genres = rows.first().map_or(0, Vec::len);
        Self::new(bands, genres, rows.into_iter().flatten().collect())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for band in 0..self.bands {
            let row = &self.entries[band * self.genres..(band + 1) * self.genres];
            let cells: Vec<&str> = row.iter().map(|&a| if a { "1" } else { "0" }).collect();
            let _ = writeln!(out, "{}", cells.join(" "));
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Returns whether a movie may be recommended to a user in `band`: every
/// genre the movie carries must be allowed for that band.
pub fn movie_allowed(cm: &BehaviorConstraintMatrix, band: usize, genres: &[bool]) -> Result<bool> {
    if genres.len() != cm.genres() {
        return Err(Error::Shape {
            expected: cm.genres(),
            found: genres.len(),
        });
    }
    if band >= cm.bands() {
        return Err(Error::Index {
            index: band,
            len: cm.bands(),
        });
    }
    for (g, &present) in genres.iter().enumerate() {
        if present && !cm.get(band, g)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Users × movies ratings on the 0.5 grid with an observed mask.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    users: usize,
    movies: usize,
    values: Vec<f64>,
    observed: Vec<bool>,
}

fn on_half_grid(x: f64) -> bool {
    (0.0..=5.0).contains(&x) && (x * 2.0).fract() == 0.0
}

fn round_to_half(x: f64) -> f64 {
    ((x * 2.0).round() / 2.0).clamp(0.5, 5.0)
}

impl RatingMatrix {
    pub fn empty(users: usize, movies: usize) -> Self {
        Self {
            users,
            movies,
            values: vec![0.0; users * movies],
            observed: vec![false; users * movies],
        }
    }

    /// Builds a fully observed matrix from row-major values.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let users = rows.len();
        let movies = rows.first().map_or(0, Vec::len);
        let mut m = Self::empty(users, movies);
        for (u, row) in rows.iter().enumerate() {
            if row.len() != movies {
                return Err(Error::Shape {
                    expected: movies,
                    found: row.len(),
                });
            }
            for (i, &r) in row.iter().enumerate() {
                m.set(u, i, r)?;
            }
        }
        Ok(m)
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn movies(&self) -> usize {
        self.movies
    }

    pub fn get(&self, user: usize, movie: usize) -> Option<f64> {
        let k = user * self.movies + movie;
        (user < self.users && movie < self.movies && self.observed[k]).then(|| self.values[k])
    }

    pub fn is_observed(&self, user: usize, movie: usize) -> bool {
        self.get(user, movie).is_some()
    }

    /// Records an observed rating; the value must lie on the 0.5 grid in `[0, 5]`.
    pub fn set(&mut self, user: usize, movie: usize, rating: f64) -> Result<()> {
        if user >= self.users {
            return Err(Error::Index {
                index: user,
                len: self.users,
            });
        }
        if movie >= self.movies {
            return Err(Error::Index {
                index: movie,
                len: self.movies,
            });
        }
        if !on_half_grid(rating) {
            return Err(Error::NumericDomain(format!(
                "rating {rating} is not on the 0.5 grid in [0, 5]"
            )));
        }
        let k = user * self.movies + movie;
        self.values[k] = rating;
        self.observed[k] = true;
        Ok(())
    }

    pub fn is_complete(&self) -> bool {
        self.observed.iter().all(|&o| o)
    }

    pub fn observed_count(&self) -> usize {
        self.observed.iter().filter(|&&o| o).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CompletionWarning {
    /// The user had no observed ratings; their row was filled with the global mean.
    NoRatings { user: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub ratings: RatingMatrix,
    pub warnings: Vec<CompletionWarning>,
}

/// Cosine similarity of two users over their co-rated movies.
fn cosine_similarity(m: &RatingMatrix, u: usize, v: usize) -> f64 {
    let (mut dot, mut nu, mut nv) = (0.0, 0.0, 0.0);
    for i in 0..m.movies {
        if let (Some(a), Some(b)) = (m.get(u, i), m.get(v, i)) {
            dot += a * b;
            nu += a * a;
            nv += b * b;
        }
    }
    if nu == 0.0 || nv == 0.0 {
        0.0
    } else {
        dot / (nu.sqrt() * nv.sqrt())
    }
}

/// User-based collaborative filtering completion.
///
/// A missing `(u, i)` is the cosine-similarity-weighted mean of the ratings of
/// `i` by users with positive similarity to `u`. Without such neighbors it
/// falls back to `u`'s mean rating, then to the global mean. Predictions are
/// rounded to the nearest 0.5 and clamped to `[0.5, 5]`; observed cells are
/// never modified.
pub fn cf_complete(sparse: &RatingMatrix) -> Result<Completion> {
    let (users, movies) = (sparse.users, sparse.movies);
    let total = sparse.observed_count();
    if sparse.is_complete() {
        return Ok(Completion {
            ratings: sparse.clone(),
            warnings: Vec::new(),
        });
    }
    if total == 0 {
        return Err(Error::domain(
            "cannot complete a matrix with no observed ratings",
        ));
    }
    let global_mean = sparse
        .values
        .iter()
        .zip(&sparse.observed)
        .filter(|(_, &o)| o)
        .map(|(v, _)| v)
        .sum::<f64>()
        / total as f64;

    let mut sim = vec![0.0; users * users];
    for u in 0..users {
        for v in (u + 1)..users {
            let s = cosine_similarity(sparse, u, v);
            sim[u * users + v] = s;
            sim[v * users + u] = s;
        }
    }

    let mut out = sparse.clone();
    let mut warnings = Vec::new();
    for u in 0..users {
        let own: Vec<f64> = (0..movies).filter_map(|i| sparse.get(u, i)).collect();
        let user_mean = (!own.is_empty()).then(|| own.iter().sum::<f64>() / own.len() as f64);
        if user_mean.is_none() {
            warn!("user {u} has no observed ratings; imputing the global mean");
            warnings.push(CompletionWarning::NoRatings { user: u });
        }
        for i in 0..movies {
            if sparse.is_observed(u, i) {
                continue;
            }
            let (mut num, mut den) = (0.0, 0.0);
            for v in 0..users {
                let s = sim[u * users + v];
                if v == u || s <= 0.0 {
                    continue;
                }
                if let Some(r) = sparse.get(v, i) {
                    num += s * r;
                    den += s;
                }
            }
            let raw = if den > 0.0 {
                num / den
            } else {
                user_mean.unwrap_or(global_mean)
            };
            let k = u * movies + i;
            out.values[k] = round_to_half(raw);
            out.observed[k] = true;
        }
    }
    Ok(Completion {
        ratings: out,
        warnings,
    })
}

/// Independent categorical age-band draws proportional to `band_weights`.
pub fn impute_ages<R: Rng + ?Sized>(
    num_users: usize,
    band_weights: &[f64],
    rng: &mut R,
) -> Result<Vec<usize>> {
    if band_weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::domain("band weights must be finite and nonnegative"));
    }
    let dist = WeightedIndex::new(band_weights)
        .map_err(|e| Error::domain(format!("invalid band weights: {e}")))?;
    Ok((0..num_users).map(|_| dist.sample(rng)).collect())
}

/// Movies × genres binary table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenreTable {
    dim: usize,
    rows: Vec<Vec<bool>>,
}

impl GenreTable {
    pub fn new(dim: usize, rows: Vec<Vec<bool>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("genre dimensionality must be positive"));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::Shape {
                expected: dim,
                found: r.len(),
            });
        }
        Ok(Self { dim, rows })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn movies(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, movie: usize) -> &[bool] {
        &self.rows[movie]
    }

    pub fn context(&self, movie: usize) -> Result<ContextVector> {
        ContextVector::new(
            self.rows[movie]
                .iter()
                .map(|&g| if g { 1.0 } else { 0.0 })
                .collect(),
        )
    }
}

/// A movie environment plus the bookkeeping of which movies survived.
#[derive(Debug, Clone)]
pub struct MovieEnv {
    pub env: EnvironmentSpec,
    /// Movie index of each environment item.
    pub movie_of_item: Vec<usize>,
    /// Movies no user may be shown; excluded from the item set.
    pub dropped: Vec<usize>,
}

/// Arms are users and items are movies: `reward(t, u) = rating / divisor` and
/// `allowed(t, u) = movie_allowed(cm, band(u), genres(movie_t))`.
///
/// `order` lists movie indices; `None` presents every kept movie once in index
/// order. Movies restricted for every user are dropped, with a warning, and
/// their entries removed from the order.
pub fn build_movie_env(
    ratings: &RatingMatrix,
    genres: &GenreTable,
    bands: &[usize],
    cm: &BehaviorConstraintMatrix,
    order: Option<&[usize]>,
    divisor: f64,
) -> Result<MovieEnv> {
    if ratings.movies() != genres.movies() {
        return Err(Error::Construction(format!(
            "ratings cover {} movies but the genre table has {}",
            ratings.movies(),
            genres.movies()
        )));
    }
    if bands.len() != ratings.users() {
        return Err(Error::Construction(format!(
            "{} band assignments for {} users",
            bands.len(),
            ratings.users()
        )));
    }
    if genres.dim() != cm.genres() {
        return Err(Error::Construction(format!(
            "genre table has {} columns, constraint matrix has {}",
            genres.dim(),
            cm.genres()
        )));
    }
    if !ratings.is_complete() {
        return Err(Error::Construction("rating matrix must be complete".into()));
    }
    if !(divisor.is_finite() && divisor >= 5.0) {
        return Err(Error::Construction(format!(
            "rating divisor {divisor} would map ratings outside [0, 1]"
        )));
    }

    let users = ratings.users();
    let mut items = Vec::new();
    let mut movie_of_item = Vec::new();
    let mut item_of_movie = vec![None; genres.movies()];
    let mut dropped = Vec::new();
    for (m, slot) in item_of_movie.iter_mut().enumerate() {
        let allowed = bands
            .iter()
            .map(|&b| movie_allowed(cm, b, genres.row(m)))
            .collect::<Result<Vec<_>>>()?;
        if !allowed.iter().any(|&a| a) {
            warn!("movie {m} is restricted for every user; dropping it");
            dropped.push(m);
            continue;
        }
        let rewards = (0..users)
            .map(|u| ratings.get(u, m).expect("complete") / divisor)
            .collect();
        *slot = Some(items.len());
        movie_of_item.push(m);
        items.push(EnvItem {
            context: genres.context(m)?,
            rewards,
            allowed,
        });
    }

    let order: Vec<usize> = match order {
        None => (0..items.len()).collect(),
        Some(movies) => movies
            .iter()
            .map(|&m| {
                item_of_movie.get(m).copied().ok_or(Error::Index {
                    index: m,
                    len: genres.movies(),
                })
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .flatten()
            .collect(),
    };
    let env = EnvironmentSpec::new(Scenario::Movie, users, items, order)?;
    Ok(MovieEnv {
        env,
        movie_of_item,
        dropped,
    })
}

/// Loaded or generated movie data with the external ids of each row.
#[derive(Debug, Clone)]
pub struct MovieData {
    pub ratings: RatingMatrix,
    pub genres: GenreTable,
    pub user_ids: Vec<String>,
    pub movie_ids: Vec<String>,
}

/// Reads `movie_id,genre_1,...,genre_d` with binary cells.
pub fn read_genres_csv<R: Read>(reader: R) -> Result<(Vec<String>, GenreTable)> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("movie_id") || headers.len() < 2 {
        return Err(Error::parse(
            "genres csv",
            "header must be `movie_id,genre_1,...,genre_d`",
        ));
    }
    let dim = headers.len() - 1;
    let mut ids = Vec::new();
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        ids.push(rec[0].trim().to_string());
        let row = rec
            .iter()
            .skip(1)
            .map(|cell| match cell.trim() {
                "0" => Ok(false),
                "1" => Ok(true),
                other => Err(Error::parse(
                    "genres csv",
                    format!("record {}: expected 0 or 1, found `{other}`", line + 1),
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((ids, GenreTable::new(dim, rows)?))
}

#[derive(Debug, Deserialize)]
struct RatingRecord {
    user_id: String,
    movie_id: String,
    rating: f64,
}

/// Reads `user_id,movie_id,rating` against the movie ids of a genre table.
///
/// Users are indexed in order of first appearance.
pub fn read_ratings_csv<R: Read>(
    reader: R,
    movie_ids: &[String],
) -> Result<(Vec<String>, RatingMatrix)> {
    let movie_index: BTreeMap<&str, usize> = movie_ids
        .iter()
        .enumerate()
        .map(|(i, m)| (m.as_str(), i))
        .collect();
    let mut rdr = csv::Reader::from_reader(reader);
    let mut user_index: BTreeMap<String, usize> = BTreeMap::new();
    let mut user_ids = Vec::new();
    let mut triples = Vec::new();
    for rec in rdr.deserialize() {
        let rec: RatingRecord = rec?;
        let movie = *movie_index.get(rec.movie_id.as_str()).ok_or_else(|| {
            Error::parse(
                "ratings csv",
                format!("unknown movie id `{}`", rec.movie_id),
            )
        })?;
        let next = user_index.len();
        let user = *user_index.entry(rec.user_id.clone()).or_insert_with(|| {
            user_ids.push(rec.user_id.clone());
            next
        });
        triples.push((user, movie, rec.rating));
    }
    let mut m = RatingMatrix::empty(user_ids.len(), movie_ids.len());
    for (u, i, r) in triples {
        m.set(u, i, r)?;
    }
    Ok((user_ids, m))
}

pub fn write_genres_csv<W: std::io::Write>(
    writer: W,
    ids: &[String],
    genres: &GenreTable,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["movie_id".to_string()];
    header.extend((1..=genres.dim()).map(|g| format!("genre_{g}")));
    w.write_record(&header)?;
    for (m, id) in ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(
            genres
                .row(m)
                .iter()
                .map(|&g| if g { "1" } else { "0" }.to_string()),
        );
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes observed cells only.
pub fn write_ratings_csv<W: std::io::Write>(
    writer: W,
    user_ids: &[String],
    movie_ids: &[String],
    ratings: &RatingMatrix,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["user_id", "movie_id", "rating"])?;
    for (u, uid) in user_ids.iter().enumerate() {
        for (i, mid) in movie_ids.iter().enumerate() {
            if let Some(r) = ratings.get(u, i) {
                w.write_record([uid.as_str(), mid.as_str(), &format!("{r:.1}")])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Parameters of the synthetic ratings generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticMovieConfig {
    pub num_users: usize,
    pub num_movies: usize,
    /// Fraction of cells observed before completion.
    pub density: f64,
    /// Probability that a movie carries each named genre.
    pub genre_probability: f64,
    /// Boost the affinity of every user for the genres their band restricts.
    pub anticorrelated: bool,
    /// Affinity added to restricted genres when `anticorrelated` is set.
    pub restricted_boost: f64,
}

impl Default for SyntheticMovieConfig {
    fn default() -> Self {
        Self {
            num_users: 100,
            num_movies: 1000,
            density: 0.3,
            genre_probability: 0.2,
            anticorrelated: false,
            restricted_boost: 1.5,
        }
    }
}

/// Seeded band assignment shared by the generator and the CSV loading path,
/// so both see the same ages for the same data seed.
pub fn bands_for(num_users: usize, band_weights: &[f64], data_seed: u64) -> Result<Vec<usize>> {
    let mut rng = substream(derive_seed(data_seed, &[1]), Purpose::Data);
    impute_ages(num_users, band_weights, &mut rng)
}

/// Generates a sparse rating matrix driven by per-user genre affinities.
///
/// Returns the sparse data; callers complete it with [`cf_complete`].
pub fn generate_movie_data(
    cfg: &SyntheticMovieConfig,
    cm: &BehaviorConstraintMatrix,
    bands: &[usize],
    data_seed: u64,
) -> Result<MovieData> {
    if cfg.num_users == 0 || cfg.num_movies == 0 {
        return Err(Error::domain(
            "synthetic data needs at least one user and one movie",
        ));
    }
    if !(cfg.density > 0.0 && cfg.density <= 1.0) {
        return Err(Error::domain("density must lie in (0, 1]"));
    }
    if !(0.0..=1.0).contains(&cfg.genre_probability) {
        return Err(Error::domain("genre_probability must lie in [0, 1]"));
    }
    if bands.len() != cfg.num_users {
        return Err(Error::Shape {
            expected: cfg.num_users,
            found: bands.len(),
        });
    }
    let dim = cm.genres();
    if dim < 2 {
        return Err(Error::domain(
            "synthetic data needs at least two genre columns",
        ));
    }
    let mut rng = substream(derive_seed(data_seed, &[2]), Purpose::Data);

    // last column is the catch-all flag
    let named = dim - 1;
    let rows: Vec<Vec<bool>> = (0..cfg.num_movies)
        .map(|_| {
            let mut row: Vec<bool> = (0..named)
                .map(|_| rng.random_bool(cfg.genre_probability))
                .collect();
            let none = !row.iter().any(|&g| g);
            row.push(none);
            row
        })
        .collect();
    let genres = GenreTable::new(dim, rows)?;

    let affinity_noise = Normal::new(0.0, 0.6).expect("valid normal");
    let bias_noise = Normal::new(3.2, 0.4).expect("valid normal");
    let rating_noise = Normal::new(0.0, 0.25).expect("valid normal");
    let mut ratings = RatingMatrix::empty(cfg.num_users, cfg.num_movies);
    for (u, &band) in bands.iter().enumerate() {
        let bias = bias_noise.sample(&mut rng);
        let mut affinity: Vec<f64> = (0..dim).map(|_| affinity_noise.sample(&mut rng)).collect();
        if cfg.anticorrelated {
            for (g, a) in affinity.iter_mut().enumerate() {
                if !cm.get(band, g)? {
                    *a += cfg.restricted_boost;
                }
            }
        }
        let forced = rng.random_range(0..cfg.num_movies);
        for m in 0..cfg.num_movies {
            let observe = rng.random_bool(cfg.density);
            let noise = rating_noise.sample(&mut rng);
            // every user keeps at least one rating
            if !(observe || m == forced) {
                continue;
            }
            let row = genres.row(m);
            let present: Vec<usize> = (0..dim).filter(|&g| row[g]).collect();
            let taste = present.iter().map(|&g| affinity[g]).sum::<f64>() / present.len() as f64;
            ratings.set(u, m, round_to_half(bias + taste + noise))?;
        }
    }
    Ok(MovieData {
        ratings,
        genres,
        user_ids: (1..=cfg.num_users).map(|u| format!("u{u}")).collect(),
        movie_ids: (1..=cfg.num_movies).map(|m| format!("m{m}")).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn horror_only() -> Vec<bool> {
        let mut g = vec![false; 10];
        g[5] = true;
        g
    }

    #[test]
    fn allowed_examples() {
        let cm = BehaviorConstraintMatrix::default_matrix();
        assert!(movie_allowed(&cm, 0, &[false; 10]).unwrap());
        // 12-17 × Horror is restricted
        assert!(!cm.get(0, 5).unwrap());
        assert!(!movie_allowed(&cm, 0, &horror_only()).unwrap());
        // Comedy allowed for 12-17, Horror not
        let mut comedy_horror = horror_only();
        comedy_horror[2] = true;
        assert!(cm.get(0, 2).unwrap());
        assert!(!movie_allowed(&cm, 0, &comedy_horror).unwrap());
        assert!(movie_allowed(
            &cm,
            0,
            &[false, false, true, false, false, false, false, false, false, false]
        )
        .unwrap());
        assert!(movie_allowed(&cm, 7, &[false; 10]).is_err());
        assert!(movie_allowed(&cm, 0, &[false; 9]).is_err());
    }

    #[test]
    fn matrix_text_roundtrip() {
        let cm = BehaviorConstraintMatrix::default_matrix();
        assert_eq!(BehaviorConstraintMatrix::parse(&cm.to_text()).unwrap(), cm);
        assert!(BehaviorConstraintMatrix::parse("1 0\n1").is_err());
        assert!(BehaviorConstraintMatrix::parse("1 2").is_err());
    }

    #[test]
    fn complete_matrix_is_unchanged() {
        let m = RatingMatrix::from_rows(&[vec![1.0, 2.5], vec![5.0, 0.5]]).unwrap();
        let c = cf_complete(&m).unwrap();
        assert_eq!(c.ratings, m);
        assert!(c.warnings.is_empty());
    }

    #[test]
    fn unanimous_neighbors() {
        let mut m = RatingMatrix::empty(3, 3);
        for u in 0..3 {
            for (i, r) in [3.5, 2.0, 4.5].iter().enumerate() {
                if !(u == 1 && i == 2) {
                    m.set(u, i, *r).unwrap();
                }
            }
        }
        let c = cf_complete(&m).unwrap();
        assert_eq!(c.ratings.get(1, 2), Some(4.5));
    }

    #[test]
    fn empty_user_falls_back_to_global_mean() {
        let mut m = RatingMatrix::empty(2, 2);
        m.set(0, 0, 4.0).unwrap();
        m.set(0, 1, 3.0).unwrap();
        let c = cf_complete(&m).unwrap();
        assert_eq!(c.warnings, vec![CompletionWarning::NoRatings { user: 1 }]);
        assert_eq!(c.ratings.get(1, 0), Some(3.5));
        assert_eq!(c.ratings.get(1, 1), Some(3.5));
    }

    #[test]
    fn no_neighbor_falls_back_to_user_mean() {
        let mut m = RatingMatrix::empty(2, 3);
        m.set(0, 0, 4.0).unwrap();
        m.set(0, 1, 2.0).unwrap();
        m.set(1, 0, 5.0).unwrap();
        let c = cf_complete(&m).unwrap();
        // nobody rated movie 2
        assert_eq!(c.ratings.get(0, 2), Some(3.0));
        assert_eq!(c.ratings.get(1, 2), Some(5.0));
        assert_eq!(c.ratings.get(1, 1), Some(2.0));
    }

    #[test]
    fn ratings_reject_off_grid() {
        let mut m = RatingMatrix::empty(1, 1);
        assert!(m.set(0, 0, 3.3).is_err());
        assert!(m.set(0, 0, 5.5).is_err());
        assert!(m.set(1, 0, 3.0).is_err());
    }

    #[test]
    fn ages_degenerate_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bands = impute_ages(50, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], &mut rng).unwrap();
        assert!(bands.iter().all(|&b| b == 0));
        assert!(impute_ages(5, &[0.0; 7], &mut rng).is_err());
        let a = impute_ages(20, &[1.0; 7], &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = impute_ages(20, &[1.0; 7], &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ages_uniform_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let bands = impute_ages(n, &[1.0; 7], &mut rng).unwrap();
        let mut counts = [0usize; 7];
        for b in bands {
            counts[b] += 1;
        }
        for c in counts {
            assert!((c as f64 / n as f64 - 1.0 / 7.0).abs() < 0.01);
        }
    }

    fn one_movie_env(
        rating: f64,
        cm: &BehaviorConstraintMatrix,
        genres: Vec<bool>,
    ) -> Result<MovieEnv> {
        let ratings = RatingMatrix::from_rows(&[vec![rating]]).unwrap();
        let table = GenreTable::new(10, vec![genres]).unwrap();
        build_movie_env(&ratings, &table, &[0], cm, None, 5.0)
    }

    #[test]
    fn single_user_single_movie() {
        let cm = BehaviorConstraintMatrix::default_matrix();
        let mut comedy = vec![false; 10];
        comedy[2] = true;
        let me = one_movie_env(4.0, &cm, comedy).unwrap();
        assert_eq!(me.env.num_arms(), 1);
        let out = me.env.step(0, 0).unwrap();
        assert!((out.reward - 0.8).abs() < 1e-15);
        assert!(!out.violation);
    }

    #[test]
    fn restricted_everywhere_is_dropped() {
        let cm = BehaviorConstraintMatrix::default_matrix();
        let ratings = RatingMatrix::from_rows(&[vec![4.0, 3.0], vec![2.0, 1.0]]).unwrap();
        let mut comedy = vec![false; 10];
        comedy[2] = true;
        let table = GenreTable::new(10, vec![horror_only(), comedy]).unwrap();
        // both users 12-17, nobody may watch horror
        let me = build_movie_env(&ratings, &table, &[0, 0], &cm, Some(&[0, 1, 0, 1]), 5.0).unwrap();
        assert_eq!(me.dropped, vec![0]);
        assert_eq!(me.movie_of_item, vec![1]);
        assert_eq!(me.env.horizon(), 2);
        assert_eq!(me.env.order(), &[0, 0]);
    }

    #[test]
    fn unrestricted_matrix_allows_everything() {
        let cm = BehaviorConstraintMatrix::all_allowed(7, 10).unwrap();
        let me = one_movie_env(2.5, &cm, horror_only()).unwrap();
        assert!(me.env.allowed(0, 0).unwrap());
    }

    #[test]
    fn construction_rejects_mismatch() {
        let cm = BehaviorConstraintMatrix::default_matrix();
        let ratings = RatingMatrix::from_rows(&[vec![4.0]]).unwrap();
        let table = GenreTable::new(10, vec![vec![false; 10], vec![false; 10]]).unwrap();
        assert!(build_movie_env(&ratings, &table, &[0], &cm, None, 5.0).is_err());
        let table = GenreTable::new(10, vec![vec![false; 10]]).unwrap();
        assert!(build_movie_env(&ratings, &table, &[0, 1], &cm, None, 5.0).is_err());
        let sparse = RatingMatrix::empty(1, 1);
        assert!(build_movie_env(&sparse, &table, &[0], &cm, None, 5.0).is_err());
    }

    #[test]
    fn csv_roundtrip() {
        let cm = BehaviorConstraintMatrix::default_matrix();
        let cfg = SyntheticMovieConfig {
            num_users: 6,
            num_movies: 15,
            ..Default::default()
        };
        let bands = bands_for(6, &[1.0; 7], 3).unwrap();
        let data = generate_movie_data(&cfg, &cm, &bands, 3).unwrap();
        let mut g = Vec::new();
        write_genres_csv(&mut g, &data.movie_ids, &data.genres).unwrap();
        let mut r = Vec::new();
        write_ratings_csv(&mut r, &data.user_ids, &data.movie_ids, &data.ratings).unwrap();
        let (ids, table) = read_genres_csv(g.as_slice()).unwrap();
        assert_eq!(ids, data.movie_ids);
        assert_eq!(table, data.genres);
        let (users, ratings) = read_ratings_csv(r.as_slice(), &ids).unwrap();
        assert_eq!(users, data.user_ids);
        assert_eq!(ratings, data.ratings);
    }

    #[test]
    fn generated_data_is_usable() {
        let cm = BehaviorConstraintMatrix::default_matrix();
        let cfg = SyntheticMovieConfig {
            num_users: 20,
            num_movies: 60,
            anticorrelated: true,
            ..Default::default()
        };
        let bands = bands_for(20, &[1.0; 7], 5).unwrap();
        let data = generate_movie_data(&cfg, &cm, &bands, 5).unwrap();
        for u in 0..20 {
            assert!((0..60).any(|m| data.ratings.is_observed(u, m)));
        }
        for m in 0..60 {
            assert!(data.genres.row(m).iter().any(|&g| g));
        }
        let full = cf_complete(&data.ratings).unwrap().ratings;
        assert!(full.is_complete());
        let me = build_movie_env(&full, &data.genres, &bands, &cm, None, 5.0).unwrap();
        assert_eq!(me.env.num_arms(), 20);
        assert_eq!(me.env.dim(), 10);
    }
}
