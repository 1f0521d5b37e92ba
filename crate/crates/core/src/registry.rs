//! Name-keyed registry of trait objects.
//!
//! Interchangeable strategies (filter responses, loss terms, verification
//! checks) are registered under a stable name and looked up at runtime from
//! configuration or command-line flags. Iteration follows registration order
//! so reports are deterministic.

use std::fmt;

pub struct Registry<T: ?Sized> {
    entries: Vec<(String, Box<T>)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DuplicateName(pub String);

impl fmt::Display for DuplicateName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "name {:?} is already registered", self.0)
    }
}

impl std::error::Error for DuplicateName {}

impl<T: ?Sized> Default for Registry<T> {
    fn default() -> Self {
        Self { entries: Vec::new() }
    }
}

impl<T: ?Sized> Registry<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, item: Box<T>) -> Result<(), DuplicateName> {
        let name = name.into();
        if self.contains(&name) {
            return Err(DuplicateName(name));
        }
        self.entries.push((name, item));
        Ok(())
    }

    /// Builder-style registration; panics on a duplicate, which is a programming error
    /// when assembling the built-in tables.
    pub fn with(mut self, name: impl Into<String>, item: Box<T>) -> Self {
        let name = name.into();
        self.register(name.clone(), item)
            .unwrap_or_else(|e| panic!("{e}"));
        self
    }

    pub fn get(&self, name: &str) -> Option<&T> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, item)| item.as_ref())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|(n, _)| n == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &T)> {
        self.entries.iter().map(|(n, item)| (n.as_str(), item.as_ref()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl<T: ?Sized> fmt::Debug for Registry<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.names()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    trait Greeter {
        fn greet(&self) -> String;
    }

    struct Hello;
    impl Greeter for Hello {
        fn greet(&self) -> String {
            "hello".into()
        }
    }

    #[test]
    fn lookup_and_order() {
        let reg = Registry::<dyn Greeter>::new()
            .with("b", Box::new(Hello) as Box<dyn Greeter>)
            .with("a", Box::new(Hello));
        assert_eq!(reg.names().collect::<Vec<_>>(), vec!["b", "a"]);
        assert_eq!(reg.get("a").unwrap().greet(), "hello");
        assert!(reg.get("c").is_none());
    }

    #[test]
    fn duplicate_rejected() {
        let mut reg: Registry<dyn Greeter> = Registry::new();
        reg.register("x", Box::new(Hello)).unwrap();
        assert_eq!(reg.register("x", Box::new(Hello)), Err(DuplicateName("x".into())));
    }
}
