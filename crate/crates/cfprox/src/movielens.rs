//! MovieLens CSV ingestion (`ratings.csv`, `movies.csv`).

use std::fs::File;
use std::io::Write;
use std::path::Path;

use cfprox_core::dataset::{Interaction, InteractionDataset, RatingScale};
use cfprox_core::{ItemId, UserId};

use crate::error::{CliError, Result};

pub const RATINGS_HEADER: [&str; 4] = ["userId", "movieId", "rating", "timestamp"];
pub const MOVIES_HEADER: [&str; 3] = ["movieId", "title", "genres"];
pub const NO_GENRES: &str = "(no genres listed)";

fn open(path: &Path, expected: &[&str]) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
    let header = reader.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().map(str::trim).ne(expected.iter().copied()) {
        return Err(CliError::Parse {
            file: path.into(),
            line: 1,
            column: 1,
            message: format!("expected header `{}`", expected.join(",")),
        });
    }
    Ok(reader)
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let line = e.position().map_or(0, |p| p.line());
    CliError::Parse {
        file: path.into(),
        line,
        column: 1,
        message: e.to_string(),
    }
}

fn field<T: std::str::FromStr>(
    path: &Path,
    rec: &csv::StringRecord,
    line: u64,
    col: usize,
) -> Result<T> {
    let raw = rec.get(col).unwrap_or("").trim();
    raw.parse().map_err(|_| CliError::Parse {
        file: path.into(),
        line,
        column: col + 1,
        message: format!("cannot parse `{raw}` as a number"),
    })
}

fn records(
    path: &Path,
    expected: &[&str],
    mut f: impl FnMut(&csv::StringRecord, u64) -> Result<()>,
) -> Result<()> {
    let mut reader = open(path, expected)?;
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != expected.len() {
            return Err(CliError::Parse {
                file: path.into(),
                line,
                column: rec.len().min(expected.len()) + 1,
                message: format!("expected {} columns, found {}", expected.len(), rec.len()),
            });
        }
        f(&rec, line)?;
    }
    Ok(())
}

/// Parses a MovieLens `ratings.csv` / `movies.csv` pair.
///
/// Items listed in `movies.csv` are kept even without ratings; repeated
/// `(user, movie)` rows keep the latest timestamp.
pub fn load_movielens(
    ratings: &Path,
    movies: &Path,
    scale: RatingScale,
) -> Result<InteractionDataset> {
    let mut builder = InteractionDataset::builder(scale);
    records(movies, &MOVIES_HEADER, |rec, line| {
        let id: u32 = field(movies, rec, line, 0)?;
        let genres = rec[2].trim();
        let genres: Vec<&str> = if genres == NO_GENRES || genres.is_empty() {
            Vec::new()
        } else {
            genres.split('|').map(str::trim).collect()
        };
        builder.add_item(ItemId(id), rec[1].trim(), genres);
        Ok(())
    })?;
    records(ratings, &RATINGS_HEADER, |rec, line| {
        let row = Interaction {
            user: UserId(field(ratings, rec, line, 0)?),
            item: ItemId(field(ratings, rec, line, 1)?),
            rating: field(ratings, rec, line, 2)?,
            timestamp: field(ratings, rec, line, 3)?,
        };
        builder
            .add_interaction(row)
            .map_err(|e| CliError::Data(format!("{}:{line}: {e}", ratings.display())))?;
        Ok(())
    })?;
    Ok(builder.build())
}

/// Writes a dataset back out in MovieLens layout.
pub fn write_movielens(dataset: &InteractionDataset, ratings: &Path, movies: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(movies).map_err(|e| csv_error(movies, e))?;
    w.write_record(MOVIES_HEADER)
        .map_err(|e| csv_error(movies, e))?;
    for item in dataset.items() {
        let title = dataset.titles().get(item).map_or("", String::as_str);
        let genres = match dataset.genres().get(item) {
            Some(g) if !g.is_empty() => g.iter().cloned().collect::<Vec<_>>().join("|"),
            _ => NO_GENRES.to_string(),
        };
        w.write_record([item.0.to_string().as_str(), title, genres.as_str()])
            .map_err(|e| csv_error(movies, e))?;
    }
    w.flush().map_err(|e| CliError::io(movies, e))?;

    let file = File::create(ratings).map_err(|e| CliError::io(ratings, e))?;
    let mut out = std::io::BufWriter::new(file);
    let io = |e| CliError::io(ratings, e);
    writeln!(out, "{}", RATINGS_HEADER.join(",")).map_err(io)?;
    for r in dataset.interactions() {
        writeln!(
            out,
            "{},{},{},{}",
            r.user.0, r.item.0, r.rating, r.timestamp
        )
        .map_err(io)?;
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    const MOVIES: &str = "movieId,title,genres\n1,Toy Story (1995),Adventure|Animation|Children\n2,\"Heat, The (1995)\",Action|Crime\n3,Unrated,(no genres listed)\n";

    #[test]
    fn hand_written_files_load_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let movies = write(dir.path(), "movies.csv", MOVIES);
        let ratings = write(dir.path(), "ratings.csv", "userId,movieId,rating,timestamp\n1,1,4.0,964982703\n1,2,3.5,964981247\n2,1,5.0,964982224\n");
        let d = load_movielens(&ratings, &movies, RatingScale::default()).unwrap();
        assert_eq!(d.users().len(), 2);
        assert_eq!(d.items().len(), 3);
        let rows: Vec<(u32, u32, f64, i64)> = d
            .interactions()
            .iter()
            .map(|r| (r.user.0, r.item.0, r.rating, r.timestamp))
            .collect();
        assert_eq!(
            rows,
            vec![
                (1, 1, 4.0, 964982703),
                (1, 2, 3.5, 964981247),
                (2, 1, 5.0, 964982224)
            ]
        );
        assert_eq!(d.titles()[&ItemId(2)], "Heat, The (1995)");
        assert!(d.genres()[&ItemId(3)].is_empty());
        assert_eq!(d.genres()[&ItemId(1)].len(), 3);
    }

    #[test]
    fn empty_ratings_keep_movies() {
        let dir = tempfile::tempdir().unwrap();
        let movies = write(dir.path(), "movies.csv", MOVIES);
        let ratings = write(
            dir.path(),
            "ratings.csv",
            "userId,movieId,rating,timestamp\n",
        );
        let d = load_movielens(&ratings, &movies, RatingScale::default()).unwrap();
        assert!(d.is_empty());
        assert_eq!(d.items().len(), 3);
    }

    #[test]
    fn malformed_rows_name_file_line_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let movies = write(dir.path(), "movies.csv", MOVIES);
        let ratings = write(
            dir.path(),
            "ratings.csv",
            "userId,movieId,rating,timestamp\n1,1,4.0,1\n1,x,3.0,2\n",
        );
        match load_movielens(&ratings, &movies, RatingScale::default()).unwrap_err() {
            CliError::Parse {
                line, column, file, ..
            } => {
                assert_eq!((line, column), (3, 2));
                assert_eq!(file, ratings);
            }
            other => panic!("{other}"),
        }
        let short = write(
            dir.path(),
            "short.csv",
            "userId,movieId,rating,timestamp\n1,1,4.0\n",
        );
        assert!(matches!(
            load_movielens(&short, &movies, RatingScale::default()),
            Err(CliError::Parse { line: 2, .. })
        ));
        let out_of_scale = write(
            dir.path(),
            "oos.csv",
            "userId,movieId,rating,timestamp\n1,1,7.0,1\n",
        );
        let err = load_movielens(&out_of_scale, &movies, RatingScale::default()).unwrap_err();
        assert!(matches!(err, CliError::Data(_)), "{err}");
        let missing = dir.path().join("nope.csv");
        assert!(matches!(
            load_movielens(&missing, &movies, RatingScale::default()),
            Err(CliError::Io { .. })
        ));
    }

    #[test]
    fn write_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let movies = write(dir.path(), "movies.csv", MOVIES);
        let ratings = write(
            dir.path(),
            "ratings.csv",
            "userId,movieId,rating,timestamp\n1,1,4.0,9\n3,2,0.5,7\n",
        );
        let d = load_movielens(&ratings, &movies, RatingScale::default()).unwrap();
        let (r2, m2) = (dir.path().join("r2.csv"), dir.path().join("m2.csv"));
        write_movielens(&d, &r2, &m2).unwrap();
        assert_eq!(load_movielens(&r2, &m2, RatingScale::default()).unwrap(), d);
    }
}
