use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use serde_json::{json, Value};

use super::City;
use crate::geometry::{GeoPoint, GeoPolygon};
use crate::ingest::UnitLevel;

/// Output file names, in writing order.
pub const FILES: [&str; 9] = [
    "geounits.geojson",
    "population.csv",
    "acs.csv",
    "lots.geojson",
    "crimes.csv",
    "properties.csv",
    "listings.jsonl",
    "category_map.csv",
    "ground_truth.json",
];

fn ring(points: &[GeoPoint]) -> Value {
    Value::Array(points.iter().map(|p| json!([p.lon(), p.lat()])).collect())
}

fn polygon(p: &GeoPolygon) -> Value {
    let mut rings = vec![ring(p.exterior())];
    rings.extend(p.holes().iter().map(|h| ring(h)));
    json!({ "type": "Polygon", "coordinates": rings })
}

fn feature_collection(features: Vec<Value>) -> Value {
    json!({ "type": "FeatureCollection", "features": features })
}

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

/// Writes every dataset of the city plus the ground-truth sidecar into
/// `dir`, creating it if needed.
pub fn write_city(city: &City, dir: &Path) -> io::Result<()> {
    fs::create_dir_all(dir)?;

    let units: Vec<Value> = city
        .units
        .iter()
        .map(|u| {
            json!({
                "type": "Feature",
                "properties": { "id": u.id, "level": u.level.name() },
                "geometry": polygon(&u.region.parts()[0]),
            })
        })
        .collect();
    fs::write(dir.join(FILES[0]), serde_json::to_string(&feature_collection(units))?)?;

    let mut w = csv::Writer::from_path(dir.join(FILES[1])).map_err(csv_err)?;
    w.write_record(["id", "population"]).map_err(csv_err)?;
    for u in &city.units {
        w.write_record([u.id.clone(), u.population.to_string()]).map_err(csv_err)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(FILES[2])).map_err(csv_err)?;
    w.write_record(["id", "per_capita_income", "b1", "b2", "b3", "b4", "b5", "b6", "b7"]).map_err(csv_err)?;
    for u in city.units.iter().filter(|u| u.level == UnitLevel::BlockGroup) {
        let (Some(inc), Some(br)) = (u.per_capita_income, u.poverty_brackets) else { continue };
        let mut rec = vec![u.id.clone(), inc.to_string()];
        rec.extend(br.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;

    let lots: Vec<Value> = city
        .lots
        .iter()
        .zip(&city.lot_polygons)
        .map(|(l, p)| {
            json!({
                "type": "Feature",
                "properties": { "id": l.id, "zoning": l.zoning.name() },
                "geometry": polygon(p),
            })
        })
        .collect();
    fs::write(dir.join(FILES[3]), serde_json::to_string(&feature_collection(lots))?)?;

    let mut w = csv::Writer::from_path(dir.join(FILES[4])).map_err(csv_err)?;
    w.write_record(["id", "datetime", "lat", "lon", "category"]).map_err(csv_err)?;
    for (c, stamp) in city.crimes.iter().zip(&city.crime_stamps) {
        w.write_record([
            c.id.as_str(),
            stamp,
            &c.location.lat().to_string(),
            &c.location.lon().to_string(),
            c.category.label(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(FILES[5])).map_err(csv_err)?;
    w.write_record(["id", "lat", "lon", "residential", "last_sale_date"]).map_err(csv_err)?;
    for p in &city.properties {
        w.write_record([
            p.id.clone(),
            p.location.lat().to_string(),
            p.location.lon().to_string(),
            u8::from(p.residential).to_string(),
            p.last_sale_date.format("%Y-%m-%d").to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;

    let mut out = BufWriter::new(fs::File::create(dir.join(FILES[6]))?);
    for l in &city.listings {
        let mut line = json!({
            "source": l.key.source.to_string(),
            "source_id": l.key.source_id,
            "name": l.name,
            "lat": l.location.lat(),
            "lon": l.location.lon(),
            "raw_categories": l.raw_categories,
        });
        if let Some(h) = &l.hours_text {
            line["hours"] = json!(h);
        }
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;

    let mut w = csv::Writer::from_path(dir.join(FILES[7])).map_err(csv_err)?;
    w.write_record(["raw_category", "business_type"]).map_err(csv_err)?;
    for (raw, ty) in city.category_map.rows() {
        w.write_record([raw, ty.name()]).map_err(csv_err)?;
    }
    w.flush()?;

    fs::write(dir.join(FILES[8]), serde_json::to_string_pretty(&city.truth)?)?;
    Ok(())
}
