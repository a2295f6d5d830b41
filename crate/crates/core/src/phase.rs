use core::fmt;
use core::str::FromStr;

/// The seven stages of one query, client and server side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PhaseName {
    ClientConnect,
    ClientBind,
    ServerInitSearch,
    ServerSearchIndex,
    ServerInvoking,
    ServerGenResult,
    ClientEndConnect,
}

impl PhaseName {
    /// All phases in lifeline order.
    pub const ALL: [PhaseName; 7] = [
        PhaseName::ClientConnect,
        PhaseName::ClientBind,
        PhaseName::ServerInitSearch,
        PhaseName::ServerSearchIndex,
        PhaseName::ServerInvoking,
        PhaseName::ServerGenResult,
        PhaseName::ClientEndConnect,
    ];

    pub const CLIENT: [PhaseName; 3] =
        [PhaseName::ClientConnect, PhaseName::ClientBind, PhaseName::ClientEndConnect];

    pub const SERVER: [PhaseName; 4] = [
        PhaseName::ServerInitSearch,
        PhaseName::ServerSearchIndex,
        PhaseName::ServerInvoking,
        PhaseName::ServerGenResult,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PhaseName::ClientConnect => "Client-Connect",
            PhaseName::ClientBind => "Client-Bind",
            PhaseName::ServerInitSearch => "Server-InitSearch",
            PhaseName::ServerSearchIndex => "Server-SearchIndex",
            PhaseName::ServerInvoking => "Server-Invoking",
            PhaseName::ServerGenResult => "Server-GenResult",
            PhaseName::ClientEndConnect => "Client-EndConnect",
        }
    }

    pub fn is_server(self) -> bool {
        matches!(
            self,
            PhaseName::ServerInitSearch
                | PhaseName::ServerSearchIndex
                | PhaseName::ServerInvoking
                | PhaseName::ServerGenResult
        )
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Lower-case snake name used in CSV columns, e.g. `server_invoking`.
    pub fn column(self) -> &'static str {
        match self {
            PhaseName::ClientConnect => "client_connect",
            PhaseName::ClientBind => "client_bind",
            PhaseName::ServerInitSearch => "server_initsearch",
            PhaseName::ServerSearchIndex => "server_searchindex",
            PhaseName::ServerInvoking => "server_invoking",
            PhaseName::ServerGenResult => "server_genresult",
            PhaseName::ClientEndConnect => "client_endconnect",
        }
    }
}

impl fmt::Display for PhaseName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PhaseName {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        PhaseName::ALL.into_iter().find(|p| p.as_str() == s).ok_or(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Edge {
    Start,
    End,
}

/// Splits `Server-Invoking.start` into its phase and edge. Any other event
/// name is a free-form marker.
pub fn phase_marker(evnt: &str) -> Option<(PhaseName, Edge)> {
    let (name, edge) = evnt.rsplit_once('.')?;
    let edge = match edge {
        "start" => Edge::Start,
        "end" => Edge::End,
        _ => return None,
    };
    Some((name.parse().ok()?, edge))
}

pub fn marker_name(phase: PhaseName, edge: Edge) -> alloc::string::String {
    alloc::format!("{}.{}", phase, if edge == Edge::Start { "start" } else { "end" })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn client_and_server_partition_all() {
        assert_eq!(PhaseName::CLIENT.len() + PhaseName::SERVER.len(), PhaseName::ALL.len());
        for p in PhaseName::ALL {
            assert_eq!(PhaseName::CLIENT.contains(&p), !p.is_server());
            assert_eq!(PhaseName::SERVER.contains(&p), p.is_server());
            assert_eq!(p.as_str().parse::<PhaseName>(), Ok(p));
        }
    }

    #[test]
    fn markers() {
        assert_eq!(phase_marker("Server-Invoking.start"), Some((PhaseName::ServerInvoking, Edge::Start)));
        assert_eq!(phase_marker("Client-Bind.end"), Some((PhaseName::ClientBind, Edge::End)));
        assert_eq!(phase_marker("provider.start"), None);
        assert_eq!(phase_marker("Client-Bind"), None);
    }
}
